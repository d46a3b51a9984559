/**
 * Typed client for the annotation service REST API.
 *
 * Every engine failure arrives as `{"error": {"code", "message"}}` with a
 * 4xx status; ApiError exposes the stable code so the UI can react without
 * string matching (e.g. "busy", "point_out_of_bounds").
 */

import type { RleMask } from "./rle.js";

export interface ObjectState {
  object_id: number;
  class_id: number;
  class_name: string;
  anchor_frame: number;
  status: "draft" | "propagated" | "lost";
  lost_at: number | null;
  color: [number, number, number];
  prompts: Array<{ x: number; y: number; polarity: string; frame: number }>;
}

export interface JobStatus {
  job_id: string;
  kind: string;
  state: "running" | "done" | "failed";
  progress: { done: number; total: number };
  error: string | null;
}

export interface SessionState {
  session_id: string;
  video_id: string;
  frame_count: number;
  resolution: [number, number];
  fps: number;
  backend: string;
  revision: number;
  propagated: boolean;
  objects: ObjectState[];
  job: JobStatus | null;
}

export interface PointResponse {
  revision: number;
  mask: RleMask;
}

export interface FrameMasks {
  revision: number;
  frame: number;
  masks: Array<{ object_id: number } & RleMask>;
}

export interface ExportResult {
  dir: string;
  count: number;
  files: Array<{ file: string; frame: number; object_id: number | null; class_id: number | null }>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

/** What the state machine needs from the service; ApiClient is the real one. */
export interface AnnotationApi {
  createSession(videoId: string): Promise<SessionState>;
  getSession(sessionId: string): Promise<SessionState>;
  addObject(
    sessionId: string,
    frame: number,
    classId: number,
    className?: string,
  ): Promise<{ object_id: number; color: [number, number, number]; revision: number }>;
  addPoint(
    sessionId: string,
    objectId: number,
    frame: number,
    x: number,
    y: number,
    polarity: "positive" | "negative",
  ): Promise<PointResponse>;
  reannotate(sessionId: string, objectId: number, frame: number): Promise<{ revision: number }>;
  restart(sessionId: string, objectId?: number): Promise<{ revision: number }>;
  propagate(sessionId: string): Promise<{ job_id: string; revision: number }>;
  jobStatus(jobId: string): Promise<JobStatus>;
  frameMasks(sessionId: string, frame: number): Promise<FrameMasks>;
  exportMasks(sessionId: string, outDir?: string, merged?: boolean): Promise<ExportResult>;
}

export class ApiClient implements AnnotationApi {
  constructor(readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      headers: { "content-type": "application/json" },
      ...init,
    });
    const body = await response.json();
    if (!response.ok) {
      const error = body?.error ?? { code: "unknown", message: response.statusText };
      throw new ApiError(response.status, error.code, error.message);
    }
    return body as T;
  }

  createSession(videoId: string): Promise<SessionState> {
    return this.request("/sessions", {
      method: "POST",
      body: JSON.stringify({ video_id: videoId }),
    });
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request(`/sessions/${sessionId}`);
  }

  addObject(sessionId: string, frame: number, classId: number, className = ""): Promise<{ object_id: number; color: [number, number, number]; revision: number }> {
    return this.request(`/sessions/${sessionId}/objects`, {
      method: "POST",
      body: JSON.stringify({ frame, class_id: classId, class_name: className }),
    });
  }

  addPoint(
    sessionId: string,
    objectId: number,
    frame: number,
    x: number,
    y: number,
    polarity: "positive" | "negative",
  ): Promise<PointResponse> {
    return this.request(`/sessions/${sessionId}/objects/${objectId}/points`, {
      method: "POST",
      body: JSON.stringify({ frame, x, y, polarity }),
    });
  }

  reannotate(sessionId: string, objectId: number, frame: number): Promise<{ revision: number }> {
    return this.request(`/sessions/${sessionId}/objects/${objectId}/reannotate`, {
      method: "POST",
      body: JSON.stringify({ frame }),
    });
  }

  restart(sessionId: string, objectId?: number): Promise<{ revision: number }> {
    return this.request(`/sessions/${sessionId}/restart`, {
      method: "POST",
      body: JSON.stringify({ object_id: objectId ?? null }),
    });
  }

  propagate(sessionId: string): Promise<{ job_id: string; revision: number }> {
    return this.request(`/sessions/${sessionId}/propagate`, { method: "POST" });
  }

  jobStatus(jobId: string): Promise<JobStatus> {
    return this.request(`/jobs/${jobId}`);
  }

  frameMasks(sessionId: string, frame: number): Promise<FrameMasks> {
    return this.request(`/sessions/${sessionId}/masks/${frame}`);
  }

  exportMasks(sessionId: string, outDir?: string, merged = false): Promise<ExportResult> {
    return this.request(`/sessions/${sessionId}/export`, {
      method: "POST",
      body: JSON.stringify({ out_dir: outDir ?? null, merged }),
    });
  }

  frameUrl(sessionId: string, frame: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/frames/${frame}`;
  }

  compositeUrl(sessionId: string, frame: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/composite/${frame}`;
  }
}
