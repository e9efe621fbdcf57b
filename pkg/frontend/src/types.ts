// Wire types for the annotation platform HTTP API.

export interface FieldValue {
  kind: "text" | "image-ref" | "video-ref";
  value: string;
}

export interface ReviewSubject {
  id: string;
  fields: Record<string, FieldValue>;
  gold?: Record<string, string | string[]>;
}

export type QuestionKind = "single-select" | "multi-select" | "free-text";

export interface QuestionSpec {
  id: string;
  prompt_text: string;
  kind: QuestionKind;
  options: string[];
  allow_none: boolean;
}

export interface GradeLevel {
  name: string;
  definition: string;
  credit: number;
}

export interface Criterion {
  name: string;
  definition: string;
  weight: number;
  levels: GradeLevel[];
  na_level?: string;
}

export interface GradingScaleRubric {
  mode: "grading_scale";
  criteria: Criterion[];
  redo_threshold?: number;
}

export interface ProjectSpec {
  id: string;
  description: string;
  labeling_instructions: string;
  questions: QuestionSpec[];
  rubric: GradingScaleRubric;
  redo_threshold: number;
}

export type Answers = Record<string, string | string[]>;

export interface Job {
  id: string;
  subject_id: string;
  queue_id: string;
  state: "open" | "leased" | "submitted" | "rejected";
}

export interface PreAnnotationEntry {
  option_confidences: Record<string, number>;
  preselected: string[];
}

export interface PreAnnotation {
  job_id: string;
  per_question: Record<string, PreAnnotationEntry>;
  errors?: Record<string, string>;
}

export interface LeaseResponse {
  job: Job;
  annotation_id: string;
  subject: ReviewSubject;
  llm_assist_enabled: boolean;
  preannotation: PreAnnotation | null;
}

export interface CriterionGrade {
  criterion: string;
  level: string;
  explanation: string;
}

export interface QAFeedback {
  id: string;
  annotation_id: string;
  source: "LLM_JUDGE" | "AUDITOR" | "RESEARCHER";
  mode: "point_deduction" | "grading_scale";
  score: number;
  status: "PASSED" | "REDO";
  created_at: number;
  criterion_grades: CriterionGrade[];
}

export interface ComparisonResponse {
  id: string;
  text: string;
}

export interface ComparisonPair {
  category: string;
  question: string;
  responses: [ComparisonResponse, ComparisonResponse];
}

export type WinnerChoice = string | "tie-good" | "tie-bad"; // response id or tie

export const REJECTION_REASONS = ["Language", "Rendering", "NotEnoughContext"] as const;

export const REJECTION_LABELS: Record<string, string> = {
  Language: "Language",
  Rendering: "Rendering",
  NotEnoughContext: "Not enough context",
};
