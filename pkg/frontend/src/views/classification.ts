// Classification view: subject on the left, questions on the right.
// Pre-annotation confidences render as two-decimal badges and the server's
// pre-selected set arrives pre-checked but stays fully editable.

import { el } from "../dom.js";
import type {
  Answers,
  PreAnnotation,
  QuestionSpec,
  ReviewSubject,
} from "../types.js";
import { REJECTION_LABELS, REJECTION_REASONS } from "../types.js";

export interface ClassificationProps {
  subject: ReviewSubject;
  questions: QuestionSpec[];
  preannotation: PreAnnotation | null;
  onSubmit: (answers: Answers) => void;
  onReject: (reason: string) => void;
}

export interface ClassificationView {
  root: HTMLElement;
  readAnswers(): Answers;
  submitButton: HTMLButtonElement;
}

function subjectPanel(subject: ReviewSubject): HTMLElement {
  const panel = el("div", { class: "subject-panel" });
  for (const [name, field] of Object.entries(subject.fields)) {
    const row = el("div", { class: "subject-field" });
    row.append(el("span", { class: "field-name", text: name }));
    if (field.kind === "image-ref") {
      row.append(el("img", { src: field.value, alt: name }));
    } else if (field.kind === "video-ref") {
      row.append(el("video", { src: field.value }));
    } else {
      row.append(el("span", { class: "field-value", text: field.value }));
    }
    panel.append(row);
  }
  return panel;
}

export function renderClassificationView(
  container: HTMLElement,
  props: ClassificationProps,
): ClassificationView {
  const root = el("div", { class: "classification-view" });
  root.append(subjectPanel(props.subject));

  const rejectRow = el("div", { class: "reject-row" });
  rejectRow.append(
    el("span", {
      text: "Optional: if this job cannot be evaluated, select the reason that most closely matches why:",
    }),
  );
  for (const reason of REJECTION_REASONS) {
    const button = el("button", {
      class: "reject",
      "data-reason": reason,
      text: REJECTION_LABELS[reason],
    });
    button.addEventListener("click", () => props.onReject(reason));
    rejectRow.append(button);
  }
  root.append(rejectRow);

  const form = el("form", { class: "questions" });
  const submitButton = el("button", { type: "submit", text: "Submit" });
  submitButton.disabled = true;

  for (const question of props.questions) {
    const entry = props.preannotation?.per_question[question.id];
    const fieldset = el("fieldset", { "data-question": question.id });
    fieldset.append(el("legend", { text: question.prompt_text }));
    const inputType = question.kind === "multi-select" ? "checkbox" : "radio";
    for (const option of question.options) {
      const label = el("label", { class: "option" });
      const input = el("input", {
        type: inputType,
        name: question.id,
        value: option,
      });
      if (entry && entry.preselected.includes(option)) {
        input.checked = true;
      }
      label.append(input, el("span", { class: "option-label", text: option }));
      const confidence = entry?.option_confidences[option];
      if (confidence !== undefined) {
        label.append(el("span", { class: "badge", text: confidence.toFixed(2) }));
      }
      fieldset.append(label);
    }
    if (question.kind === "multi-select" && question.allow_none) {
      const label = el("label", { class: "option" });
      const input = el("input", { type: "checkbox", name: question.id, value: "" });
      input.classList.add("none-option");
      label.append(input, el("span", { class: "option-label", text: "None" }));
      fieldset.append(label);
    }
    form.append(fieldset);
  }
  form.append(submitButton);
  root.append(form);

  function readAnswers(): Answers {
    const answers: Answers = {};
    for (const question of props.questions) {
      const checked = Array.from(
        form.querySelectorAll<HTMLInputElement>(`input[name="${question.id}"]:checked`),
      )
        .map((input) => input.value)
        .filter((value) => value !== "");
      if (question.kind === "multi-select") {
        answers[question.id] = checked;
      } else if (checked.length === 1) {
        answers[question.id] = checked[0];
      }
    }
    return answers;
  }

  function complete(): boolean {
    return props.questions.every((question) => {
      const inputs = form.querySelectorAll<HTMLInputElement>(
        `input[name="${question.id}"]:checked`,
      );
      if (question.kind === "single-select") return inputs.length === 1;
      if (question.allow_none) return inputs.length >= 1; // "None" counts as an answer
      return Array.from(inputs).filter((i) => i.value !== "").length >= 1;
    });
  }

  function refresh(): void {
    submitButton.disabled = !complete();
  }
  form.addEventListener("change", refresh);
  refresh();

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (!complete()) return;
    props.onSubmit(readAnswers());
  });

  container.append(root);
  return { root, readAnswers, submitButton };
}
