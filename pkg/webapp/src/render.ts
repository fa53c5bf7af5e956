// DOM rendering: numbered editable steps with entity highlighting, a read-only
// SQL panel, and inline error banners. Decorations color the text without ever
// altering it.

import type { SpanDto } from "./api.js";
import type { Actions } from "./actions.js";
import type { AppState, StepView } from "./state.js";

function decorate(doc: Document, text: string, spans: SpanDto[]): DocumentFragment {
  const fragment = doc.createDocumentFragment();
  let cursor = 0;
  for (const span of spans) {
    if (span.start > cursor) {
      fragment.appendChild(doc.createTextNode(text.slice(cursor, span.start)));
    }
    const piece = doc.createElement("span");
    piece.className = `ent ent-${span.class}`;
    if (span.entity) {
      piece.title = span.entity;
    }
    piece.textContent = text.slice(span.start, span.end);
    fragment.appendChild(piece);
    cursor = span.end;
  }
  if (cursor < text.length) {
    fragment.appendChild(doc.createTextNode(text.slice(cursor)));
  }
  return fragment;
}

function renderStep(doc: Document, step: StepView, state: AppState,
                    actions: Actions): HTMLElement {
  const row = doc.createElement("li");
  row.className = `step step-${step.role}`;
  row.dataset.index = String(step.index);

  const preview = doc.createElement("div");
  preview.className = "step-text";
  preview.appendChild(decorate(doc, step.text, step.spans));
  row.appendChild(preview);

  if (step.role !== "marker") {
    const editor = doc.createElement("input");
    editor.type = "text";
    editor.className = "step-editor";
    editor.value = step.draft ?? step.text;
    editor.addEventListener("input", () => actions.setDraft(step.index, editor.value));
    row.appendChild(editor);

    const submit = doc.createElement("button");
    submit.className = "step-submit";
    submit.textContent = "Apply";
    submit.disabled = state.busy || !step.dirty;
    submit.addEventListener("click", () => void actions.submitEdit(step.index));
    row.appendChild(submit);

    const remove = doc.createElement("button");
    remove.className = "step-remove";
    remove.textContent = "Remove";
    remove.disabled = state.busy;
    remove.addEventListener("click", () => void actions.removeStep(step.index));
    row.appendChild(remove);
  }

  if (step.verdict) {
    const verdict = doc.createElement("span");
    verdict.className = `step-verdict verdict-${step.verdict}`;
    verdict.textContent = step.verdict;
    row.appendChild(verdict);
  }
  if (step.error) {
    const banner = doc.createElement("div");
    banner.className = "step-error";
    banner.textContent = step.error;
    row.appendChild(banner);
  }
  return row;
}

export function renderSession(doc: Document, root: HTMLElement, state: AppState,
                              actions: Actions): void {
  root.textContent = "";

  if (state.globalError) {
    const banner = doc.createElement("div");
    banner.className = "global-error";
    banner.textContent = state.globalError;
    root.appendChild(banner);
  }

  if (state.steps.length > 0) {
    const list = doc.createElement("ol");
    list.className = "steps";
    for (const step of state.steps) {
      list.appendChild(renderStep(doc, step, state, actions));
    }
    root.appendChild(list);

    const insertBox = doc.createElement("div");
    insertBox.className = "insert-box";
    const position = doc.createElement("input");
    position.type = "number";
    position.className = "insert-position";
    position.min = "1";
    position.value = String(state.steps.length + 1);
    const text = doc.createElement("input");
    text.type = "text";
    text.className = "insert-text";
    text.placeholder = "New step, e.g. Keep the records where ...";
    const add = doc.createElement("button");
    add.className = "insert-submit";
    add.textContent = "Add step";
    add.disabled = state.busy;
    add.addEventListener("click", () =>
      void actions.addStep(parseInt(position.value, 10), text.value));
    insertBox.append(position, text, add);
    root.appendChild(insertBox);
  }

  const panel = doc.createElement("pre");
  panel.className = "sql-panel";
  panel.textContent = state.sql ?? "";
  root.appendChild(panel);
}
