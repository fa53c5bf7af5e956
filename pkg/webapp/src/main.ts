// Entry point: wires the question form, schema picker and step list together.
// The active session id lives in the URL hash so a reload restores the session.

import { ApiClient } from "./api.js";
import { Actions } from "./actions.js";
import { renderSession } from "./render.js";
import { Store } from "./state.js";

export async function boot(doc: Document, apiBase?: string): Promise<Actions> {
  const params = new URLSearchParams(doc.defaultView?.location.search ?? "");
  const base = apiBase ?? params.get("api") ?? "http://127.0.0.1:8000";
  const client = new ApiClient(base);
  const store = new Store();
  const actions = new Actions(client, store);

  const root = doc.getElementById("app");
  const schemaSelect = doc.getElementById("schema") as HTMLSelectElement | null;
  const questionInput = doc.getElementById("question") as HTMLInputElement | null;
  const askButton = doc.getElementById("ask") as HTMLButtonElement | null;
  if (!root || !schemaSelect || !questionInput || !askButton) {
    throw new Error("missing page skeleton");
  }

  store.subscribe((state) => {
    renderSession(doc, root, state, actions);
    askButton.disabled = state.busy;
    if (state.sessionId && doc.defaultView) {
      doc.defaultView.location.hash = `session=${state.sessionId}`;
    }
  });

  const { schemas } = await client.listSchemas();
  for (const schema of schemas) {
    const option = doc.createElement("option");
    option.value = schema.schema_id;
    option.textContent = schema.schema_id;
    schemaSelect.appendChild(option);
  }

  askButton.addEventListener("click", () => {
    void (async () => {
      if (!store.state.sessionId) {
        await actions.createSession(schemaSelect.value);
      }
      if (store.state.sessionId && questionInput.value.trim()) {
        await actions.ask(questionInput.value);
      }
    })();
  });

  const hash = doc.defaultView?.location.hash ?? "";
  const match = /session=([0-9a-f]+)/.exec(hash);
  if (match) {
    await actions.loadSession(match[1]);
  }
  return actions;
}

declare global {
  interface Window {
    sqlrefineBoot?: Promise<Actions>;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.sqlrefineBoot = boot(document);
}
