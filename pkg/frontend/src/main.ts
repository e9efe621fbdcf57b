// Entry point: a minimal single-page shell that leases a job for the signed-in
// annotator and routes to the right view for the project's question shapes.

import { MiloApi } from "./api.js";
import { clear, el } from "./dom.js";
import type { Answers, LeaseResponse, QuestionSpec } from "./types.js";
import { renderClassificationView } from "./views/classification.js";
import { renderFeedbackReview } from "./views/feedback.js";
import { renderVqaView } from "./views/vqa.js";

interface Session {
  annotatorId: string;
  queueId: string;
  questions: QuestionSpec[];
}

function isVqa(questions: QuestionSpec[]): boolean {
  return questions.some((q) => q.kind === "free-text");
}

export async function startAnnotating(
  container: HTMLElement,
  api: MiloApi,
  session: Session,
): Promise<void> {
  clear(container);
  let lease: LeaseResponse;
  try {
    lease = await api.lease(session.queueId, session.annotatorId);
  } catch (error) {
    container.append(
      el("div", { class: "banner", text: `No job available: ${(error as Error).message}` }),
    );
    return;
  }

  const submit = async (answers: Answers) => {
    await api.submit(lease.job.id, session.annotatorId, answers);
    await startAnnotating(container, api, session);
  };
  const reject = async (reason: string) => {
    await api.reject(lease.job.id, session.annotatorId, reason);
    await startAnnotating(container, api, session);
  };

  if (isVqa(session.questions)) {
    const queryQuestion = session.questions.find((q) => q.id === "query");
    const responseQuestion = session.questions.find((q) => q.kind === "free-text");
    renderVqaView(container, {
      assistEnabled: lease.llm_assist_enabled,
      generateDraft: async (query) => (await api.assist(lease.annotation_id, query)).draft,
      onSubmit: ({ query, response }) => {
        const answers: Answers = {};
        if (queryQuestion) answers[queryQuestion.id] = query;
        if (responseQuestion) answers[responseQuestion.id] = response;
        void submit(answers);
      },
    });
  } else {
    renderClassificationView(container, {
      subject: lease.subject,
      questions: session.questions,
      preannotation: lease.preannotation,
      onSubmit: (answers) => void submit(answers),
      onReject: (reason) => void reject(reason),
    });
  }
}

export async function showFeedback(
  container: HTMLElement,
  api: MiloApi,
  annotatorId: string,
): Promise<void> {
  clear(container);
  const { feedback } = await api.annotatorFeedback(annotatorId);
  renderFeedbackReview(container, feedback);
}

export { MiloApi };
