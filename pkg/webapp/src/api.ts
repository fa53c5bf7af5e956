// Typed client for the refinement session service. All SQL changes originate
// from these endpoints; the UI never mutates SQL locally.

export interface SpanDto {
  start: number;
  end: number;
  entity: string | null;
  class: string;
}

export interface StepDto {
  index: number;
  text: string;
  clause_kind: string | null;
  role: string;
  spans: SpanDto[];
}

export interface ExplanationDto {
  schema_id: string;
  deep_nesting: boolean;
  steps: StepDto[];
}

export interface SessionView {
  id: string;
  schema_id: string;
  question: string | null;
  sql: string | null;
  explanation: ExplanationDto | null;
  history: Array<Record<string, unknown>>;
  edit_path?: string;
  result_preview?: unknown[][];
}

export interface SchemaInfo {
  schema_id: string;
  tables: Record<string, string[]>;
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private baseUrl: string;
  private fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "Content-Type": "application/json" } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const message =
        payload && typeof payload === "object" && "error" in payload
          ? String((payload as { error: unknown }).error)
          : `request failed with status ${response.status}`;
      throw new ApiError(response.status, message);
    }
    return payload as T;
  }

  listSchemas(): Promise<{ schemas: SchemaInfo[] }> {
    return this.request("GET", "/schemas");
  }

  createSession(schemaId: string): Promise<SessionView> {
    return this.request("POST", "/sessions", { schema_id: schemaId });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  ask(sessionId: string, text: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sessionId}/question`, { text });
  }

  editStep(sessionId: string, index: number, text: string): Promise<SessionView> {
    return this.request("PUT", `/sessions/${sessionId}/steps/${index}`, { text });
  }

  insertStep(sessionId: string, position: number, text: string): Promise<SessionView> {
    return this.request("POST", `/sessions/${sessionId}/steps`, { position, text });
  }

  deleteStep(sessionId: string, index: number): Promise<SessionView> {
    return this.request("DELETE", `/sessions/${sessionId}/steps/${index}`);
  }
}
