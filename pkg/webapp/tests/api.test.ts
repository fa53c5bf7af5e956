import assert from "node:assert/strict";
import { test } from "node:test";

import { ApiClient, ApiError } from "../src/api.js";

interface Recorded {
  url: string;
  method?: string;
  body?: string;
}

function fakeFetch(status: number, payload: unknown, log: Recorded[]) {
  return async (url: string, init?: RequestInit): Promise<Response> => {
    log.push({ url, method: init?.method, body: init?.body as string | undefined });
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
}

test("requests hit the documented endpoints with JSON bodies", async () => {
  const log: Recorded[] = [];
  const client = new ApiClient("http://x/", fakeFetch(200, { ok: 1 }, log));
  await client.createSession("concert_singer");
  await client.ask("s1", "SELECT 1");
  await client.getSession("s1");
  await client.editStep("s1", 3, "Return the age");
  await client.insertStep("s1", 2, "Keep the records where the age is greater than 3");
  await client.deleteStep("s1", 2);
  assert.deepEqual(
    log.map((r) => `${r.method} ${r.url}`),
    [
      "POST http://x/sessions",
      "POST http://x/sessions/s1/question",
      "GET http://x/sessions/s1",
      "PUT http://x/sessions/s1/steps/3",
      "POST http://x/sessions/s1/steps",
      "DELETE http://x/sessions/s1/steps/2",
    ],
  );
  assert.deepEqual(JSON.parse(log[0].body!), { schema_id: "concert_singer" });
  assert.deepEqual(JSON.parse(log[4].body!), {
    position: 2,
    text: "Keep the records where the age is greater than 3",
  });
});

test("server error payloads become ApiError with the server message", async () => {
  const client = new ApiClient("http://x", fakeFetch(422, { error: "bad edit" }, []));
  await assert.rejects(
    () => client.editStep("s1", 1, "zzz"),
    (err: unknown) => err instanceof ApiError && err.status === 422 && err.message === "bad edit",
  );
});

test("non-JSON failures still raise with the status code", async () => {
  const broken = async () => new Response("boom", { status: 500 });
  const client = new ApiClient("http://x", broken);
  await assert.rejects(
    () => client.getSession("s1"),
    (err: unknown) => err instanceof ApiError && err.status === 500,
  );
});
