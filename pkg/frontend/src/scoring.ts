// Client-side mirror of the server's grading-scale scorer, used only for the
// live preview in the QA view; the server remains the source of record and
// the contract test pins this to its output for every grade combination.

import type { GradingScaleRubric } from "./types.js";

export class ScoringError extends Error {}

export function scoreGradingScale(
  rubric: GradingScaleRubric,
  grades: Record<string, string>,
): number {
  const known = new Set(rubric.criteria.map((c) => c.name));
  for (const name of Object.keys(grades)) {
    if (!known.has(name)) throw new ScoringError(`unknown criterion ${name}`);
  }
  const credits = new Map<string, number | null>();
  for (const criterion of rubric.criteria) {
    const level = grades[criterion.name];
    if (level === undefined) throw new ScoringError(`missing grade for ${criterion.name}`);
    if (criterion.na_level !== undefined && level === criterion.na_level) {
      credits.set(criterion.name, null);
      continue;
    }
    const match = criterion.levels.find((lv) => lv.name === level);
    if (!match) throw new ScoringError(`unknown level ${level} for ${criterion.name}`);
    credits.set(criterion.name, match.credit);
  }
  const active = rubric.criteria.filter((c) => credits.get(c.name) !== null);
  if (active.length === 0) throw new ScoringError("every criterion graded N/A");
  const totalWeight = active.reduce((sum, c) => sum + c.weight, 0);
  let score = 0;
  for (const criterion of active) {
    score += (criterion.weight / totalWeight) * (credits.get(criterion.name) as number);
  }
  return score;
}

export function gate(score: number, threshold: number): "PASSED" | "REDO" {
  return score >= threshold ? "PASSED" : "REDO";
}

export function formatScoreBadge(score: number, threshold: number): string {
  const pct = Math.round(score * 100);
  return `Score: ${pct}% ${gate(score, threshold) === "PASSED" ? "passed" : "redo"}`;
}
