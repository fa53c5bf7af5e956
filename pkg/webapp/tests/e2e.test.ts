// End-to-end smoke: a scripted browser session against the real HTTP service.
// ask -> atomic edit -> complex edit -> insert -> delete; the SQL panel must
// reflect every change within one round trip and the final query must match
// the expected one exactly.

import assert from "node:assert/strict";
import { after, before, test } from "node:test";
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { JSDOM } from "jsdom";

import { boot } from "../src/main.js";

const HERE = path.dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = path.resolve(HERE, "..", "..", "..");
const SCHEMA_DIR = path.join(REPO_ROOT, "tests", "data", "schemas");

const PORT = 8612 + (process.pid % 977);
const BASE = `http://127.0.0.1:${PORT}`;

let service: ChildProcess | null = null;
let dataDir: string | null = null;

async function waitForService(timeoutMs = 30000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const response = await fetch(`${BASE}/schemas`);
      if (response.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("service did not become ready");
    }
    await new Promise((resolve) => setTimeout(resolve, 200));
  }
}

before(async () => {
  dataDir = mkdtempSync(path.join(tmpdir(), "sqlrefine-e2e-"));
  service = spawn(
    "python3",
    ["-m", "sqlrefine.cli", "serve", "--bind", `127.0.0.1:${PORT}`],
    {
      cwd: REPO_ROOT,
      env: {
        ...process.env,
        SQLREFINE_SCHEMA_DIR: SCHEMA_DIR,
        SQLREFINE_DATA_DIR: dataDir,
      },
      stdio: "ignore",
    },
  );
  await waitForService();
});

after(() => {
  service?.kill();
  if (dataDir) {
    rmSync(dataDir, { recursive: true, force: true });
  }
});

function sqlPanel(doc: Document): string {
  return doc.querySelector("pre.sql-panel")?.textContent ?? "";
}

async function waitFor(check: () => boolean, what: string, timeoutMs = 10000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${what}`);
    }
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
}

test("A8 webapp end-to-end smoke", async () => {
  const dom = new JSDOM(
    `<header>
       <select id="schema"></select>
       <input id="question" type="text">
       <button id="ask">Ask</button>
     </header>
     <div id="app"></div>`,
    { url: "http://localhost/" },
  );
  const doc = dom.window.document;
  const actions = await boot(doc, BASE);

  const schemaSelect = doc.getElementById("schema") as HTMLSelectElement;
  const questionInput = doc.getElementById("question") as HTMLInputElement;
  const askButton = doc.getElementById("ask") as HTMLButtonElement;
  assert.ok([...schemaSelect.options].some((o) => o.value === "concert_singer"));
  schemaSelect.value = "concert_singer";

  // ask: the stub backend parses the question as SQL
  questionInput.value = "SELECT name FROM singer WHERE age > 30";
  askButton.click();
  await waitFor(() => sqlPanel(doc) !== "", "the initial query");
  assert.equal(sqlPanel(doc), "SELECT name FROM singer WHERE age > 30");
  assert.equal(doc.querySelectorAll("li.step").length, 3);

  function stepRow(index: number): HTMLElement {
    const row = doc.querySelector(`li.step[data-index="${index}"]`);
    assert.ok(row, `step ${index} rendered`);
    return row as HTMLElement;
  }

  async function editStep(index: number, text: string, expectedSql: string) {
    const row = stepRow(index);
    const editor = row.querySelector("input.step-editor") as HTMLInputElement;
    editor.value = text;
    editor.dispatchEvent(new dom.window.Event("input", { bubbles: true }));
    (stepRow(index).querySelector("button.step-submit") as HTMLButtonElement).click();
    await waitFor(() => sqlPanel(doc) === expectedSql, `sql after editing step ${index}`);
  }

  // one atomic edit: swap a column name (direct transformation path)
  await editStep(3, "Return the age", "SELECT age FROM singer WHERE age > 30");
  assert.equal(actions.store.state.steps[2].verdict, "direct");

  // one complex edit: rewrite the filter (clause regeneration path)
  await editStep(2, "Keep the records where the age is less than 20",
                 "SELECT age FROM singer WHERE age < 20");
  assert.equal(actions.store.state.steps[1].verdict, "generated");

  // insert a sort step
  const positionInput = doc.querySelector("input.insert-position") as HTMLInputElement;
  const textInput = doc.querySelector("input.insert-text") as HTMLInputElement;
  positionInput.value = "3";
  textInput.value = "Sort the records based on the age in descending order";
  (doc.querySelector("button.insert-submit") as HTMLButtonElement).click();
  await waitFor(() => sqlPanel(doc) === "SELECT age FROM singer WHERE age < 20 ORDER BY age DESC",
                "sql after inserting the sort step");
  assert.equal(doc.querySelectorAll("li.step").length, 4);

  // delete the filter step
  (stepRow(2).querySelector("button.step-remove") as HTMLButtonElement).click();
  await waitFor(() => sqlPanel(doc) === "SELECT age FROM singer ORDER BY age DESC",
                "sql after deleting the filter step");

  // final query matches the expected one byte for byte (hence exact set match)
  assert.equal(sqlPanel(doc), "SELECT age FROM singer ORDER BY age DESC");

  // a fresh page load with the same session reproduces the state exactly
  const dom2 = new JSDOM(
    `<header><select id="schema"></select><input id="question" type="text">
     <button id="ask">Ask</button></header><div id="app"></div>`,
    { url: `http://localhost/#session=${actions.store.state.sessionId}` },
  );
  const actions2 = await boot(dom2.window.document, BASE);
  await waitFor(() => sqlPanel(dom2.window.document) !== "", "reloaded session");
  assert.equal(sqlPanel(dom2.window.document), "SELECT age FROM singer ORDER BY age DESC");
  assert.deepEqual(
    actions2.store.state.steps.map((s) => s.text),
    actions.store.state.steps.map((s) => s.text),
  );
});
