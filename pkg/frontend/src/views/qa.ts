// Auditor QA view: one grade picker and comment per rubric criterion, with a
// live score preview mirroring the server's scorer and the PASSED/REDO badge
// at the project threshold. Partial grade sets cannot be submitted.

import { el } from "../dom.js";
import { ScoringError, formatScoreBadge, scoreGradingScale } from "../scoring.js";
import type { CriterionGrade, GradingScaleRubric } from "../types.js";

export interface QaProps {
  rubric: GradingScaleRubric;
  redoThreshold: number;
  onSubmit: (grades: CriterionGrade[]) => void;
}

export interface QaView {
  root: HTMLElement;
  preview: HTMLElement;
  submitButton: HTMLButtonElement;
  setGrade(criterion: string, level: string): void;
  currentScore(): number | null;
}

export function renderQaView(container: HTMLElement, props: QaProps): QaView {
  const root = el("div", { class: "qa-view" });
  const selects = new Map<string, HTMLSelectElement>();
  const comments = new Map<string, HTMLInputElement>();

  for (const criterion of props.rubric.criteria) {
    const row = el("div", { class: "criterion-row", "data-criterion": criterion.name });
    row.append(el("span", { class: "criterion-name", text: criterion.name }));
    const select = el("select", { name: criterion.name });
    select.append(el("option", { value: "", text: "-- grade --" }));
    const levelNames = [
      ...(criterion.na_level !== undefined ? [criterion.na_level] : []),
      ...criterion.levels.map((lv) => lv.name),
    ];
    for (const name of levelNames) {
      select.append(el("option", { value: name, text: name }));
    }
    const comment = el("input", { type: "text", class: "comment", placeholder: "Explanation" });
    row.append(select, comment);
    selects.set(criterion.name, select);
    comments.set(criterion.name, comment);
    root.append(row);
  }

  const preview = el("div", { class: "score-preview", text: "Score: --" });
  const submitButton = el("button", { class: "submit-qa", text: "Submit QA" });
  submitButton.disabled = true;
  root.append(preview, submitButton);

  function collected(): Record<string, string> | null {
    const grades: Record<string, string> = {};
    for (const [name, select] of selects) {
      if (select.value === "") return null;
      grades[name] = select.value;
    }
    return grades;
  }

  function currentScore(): number | null {
    const grades = collected();
    if (grades === null) return null;
    try {
      return scoreGradingScale(props.rubric, grades);
    } catch (error) {
      if (error instanceof ScoringError) return null;
      throw error;
    }
  }

  function refresh(): void {
    const grades = collected();
    if (grades === null) {
      preview.textContent = "Score: --";
      submitButton.disabled = true;
      return;
    }
    const score = currentScore();
    if (score === null) {
      preview.textContent = "Score: N/A (all criteria N/A)";
      submitButton.disabled = true;
      return;
    }
    preview.textContent = formatScoreBadge(score, props.redoThreshold);
    submitButton.disabled = false;
  }
  root.addEventListener("change", refresh);

  submitButton.addEventListener("click", () => {
    const grades = collected();
    if (grades === null) return; // blocked client-side
    props.onSubmit(
      props.rubric.criteria.map((criterion) => ({
        criterion: criterion.name,
        level: grades[criterion.name],
        explanation: comments.get(criterion.name)!.value,
      })),
    );
  });

  container.append(root);
  return {
    root,
    preview,
    submitButton,
    currentScore,
    setGrade(criterion: string, level: string): void {
      const select = selects.get(criterion);
      if (!select) throw new Error(`no criterion ${criterion}`);
      select.value = level;
      refresh();
    },
  };
}
