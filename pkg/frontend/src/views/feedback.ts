// Feedback review: every QA record on the annotator's work as a card tagged
// with its source, with the per-criterion grades and explanations expandable.

import { el } from "../dom.js";
import type { QAFeedback } from "../types.js";

const SOURCE_TAGS: Record<QAFeedback["source"], string> = {
  LLM_JUDGE: "LLM JUDGE",
  AUDITOR: "Auditor",
  RESEARCHER: "Researcher",
};

export function renderFeedbackCard(feedback: QAFeedback): HTMLElement {
  const card = el("div", { class: "feedback-card", "data-feedback": feedback.id });
  card.append(el("span", { class: "source-tag", text: SOURCE_TAGS[feedback.source] }));
  const pct = Math.round(feedback.score * 100);
  card.append(
    el("span", {
      class: `score-badge ${feedback.status === "PASSED" ? "passed" : "redo"}`,
      text: `Score: ${pct}% ${feedback.status === "PASSED" ? "passed" : "redo"}`,
    }),
  );
  const details = el("details", { class: "feedback-details" });
  details.append(el("summary", { text: "View feedback" }));
  for (const grade of feedback.criterion_grades) {
    const block = el("div", { class: "criterion-feedback" });
    block.append(el("h4", { text: grade.criterion }));
    block.append(el("div", { class: "rating", text: `Rating: ${grade.level}` }));
    if (grade.explanation) {
      block.append(el("div", { class: "comment", text: `Comment: ${grade.explanation}` }));
    }
    details.append(block);
  }
  card.append(details);
  return card;
}

export function renderFeedbackReview(
  container: HTMLElement,
  items: { annotation_id: string; feedback: QAFeedback }[],
): HTMLElement {
  const root = el("div", { class: "feedback-review" });
  for (const item of items) {
    const section = el("div", { class: "annotation-feedback", "data-annotation": item.annotation_id });
    section.append(el("h3", { text: `Response ${item.annotation_id}` }));
    section.append(renderFeedbackCard(item.feedback));
    root.append(section);
  }
  container.append(root);
  return root;
}
