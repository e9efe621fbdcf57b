// VQA text-generation view: query box, optional model-draft box behind a
// generate button (assist-enabled queues only), response box with a live word
// counter. The draft is read-only and never copied into the response; a
// byte-identical response triggers a confirm dialog citing the no-copy rule.

import { el } from "../dom.js";
import { wordCountLabel } from "../wordcount.js";

export interface VqaProps {
  assistEnabled: boolean;
  generateDraft: (query: string) => Promise<string>;
  onSubmit: (payload: { query: string; response: string }) => void;
  confirmDialog?: (message: string) => boolean;
}

export interface VqaView {
  root: HTMLElement;
  queryBox: HTMLTextAreaElement;
  draftBox: HTMLTextAreaElement | null;
  responseBox: HTMLTextAreaElement;
  generateButton: HTMLButtonElement | null;
  submitButton: HTMLButtonElement;
  errorBanner: HTMLElement;
}

const NO_COPY_MESSAGE =
  "Your response is identical to the model draft. The drafting assistant is a " +
  "starting point; please write your own response rather than copying it. Submit anyway?";

export function renderVqaView(container: HTMLElement, props: VqaProps): VqaView {
  const confirmDialog = props.confirmDialog ?? ((message) => window.confirm(message));
  const root = el("div", { class: "vqa-view" });

  const queryBox = el("textarea", { class: "query-box", placeholder: "Write your query" });
  const queryCounter = el("div", { class: "word-counter", text: wordCountLabel("") });
  queryBox.addEventListener("input", () => {
    queryCounter.textContent = wordCountLabel(queryBox.value);
  });
  root.append(el("h3", { text: "Query" }), queryBox, queryCounter);

  let draftBox: HTMLTextAreaElement | null = null;
  let generateButton: HTMLButtonElement | null = null;
  const errorBanner = el("div", { class: "error-banner" });
  errorBanner.hidden = true;

  if (props.assistEnabled) {
    draftBox = el("textarea", { class: "draft-box", readonly: "readonly" });
    draftBox.readOnly = true;
    generateButton = el("button", { class: "generate", text: "Generate LLM response" });
    const generate = async () => {
      errorBanner.hidden = true;
      try {
        const draft = await props.generateDraft(queryBox.value);
        draftBox!.value = draft;
      } catch (error) {
        errorBanner.textContent = `Draft generation failed (${String(
          (error as Error).message,
        )}).`;
        const retry = el("button", { class: "retry", text: "Retry" });
        retry.addEventListener("click", generate);
        errorBanner.append(" ", retry);
        errorBanner.hidden = false;
      }
    };
    generateButton.addEventListener("click", generate);
    root.append(
      el("h3", { text: "LLM Response" }),
      el("p", {
        class: "hint",
        text: "Click the button below to get a suggested response from the LLM.",
      }),
      generateButton,
      draftBox,
      errorBanner,
    );
  }

  const responseBox = el("textarea", { class: "response-box", placeholder: "Write your response" });
  const responseCounter = el("div", { class: "word-counter", text: wordCountLabel("") });
  responseBox.addEventListener("input", () => {
    responseCounter.textContent = wordCountLabel(responseBox.value);
  });
  const submitButton = el("button", { class: "submit", text: "Submit" });
  submitButton.addEventListener("click", () => {
    if (draftBox && draftBox.value !== "" && responseBox.value === draftBox.value) {
      if (!confirmDialog(NO_COPY_MESSAGE)) return;
    }
    props.onSubmit({ query: queryBox.value, response: responseBox.value });
  });
  root.append(el("h3", { text: "Response" }), responseBox, responseCounter, submitButton);

  container.append(root);
  return { root, queryBox, draftBox, responseBox, generateButton, submitButton, errorBanner };
}
