/**
 * UI session state machine, DOM-free.
 *
 * Owns everything the canvas layer renders: the open session, the current
 * frame's overlays (always server truth at some revision - the client never
 * mutates masks locally), click markers, point polarity mode, and the
 * propagation job being polled. Mutations are serialized (at most one
 * in-flight request) and responses carrying a stale revision are discarded.
 */

import { ApiError, type AnnotationApi, type JobStatus, type SessionState } from "./api.js";
import type { RleMask } from "./rle.js";

export type PointMode = "positive" | "negative";

export interface ClickMarker {
  x: number;
  y: number;
  polarity: PointMode;
  objectId: number;
  frame: number;
}

export interface OverlayState {
  objectId: number;
  color: [number, number, number];
  mask: RleMask;
  visible: boolean;
}

export interface AppOptions {
  /** Job poll interval; the default suits ~4 fps propagation backends. */
  pollIntervalMs?: number;
  onChange?: () => void;
  onNotice?: (message: string) => void;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export class AnnotatorApp {
  session: SessionState | null = null;
  currentFrame = 0;
  pointMode: PointMode = "positive";
  selectedObject: number | null = null;
  /** Highest revision whose state this client has applied. */
  revision = 0;
  overlays = new Map<number, OverlayState>();
  markers: ClickMarker[] = [];
  job: JobStatus | null = null;
  notices: string[] = [];

  private readonly pollIntervalMs: number;
  private readonly onChange: () => void;
  private readonly onNotice: (message: string) => void;
  private mutationChain: Promise<unknown> = Promise.resolve();
  private readonly hiddenObjects = new Set<number>();

  constructor(
    readonly api: AnnotationApi,
    options: AppOptions = {},
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 250;
    this.onChange = options.onChange ?? (() => {});
    this.onNotice =
      options.onNotice ??
      ((message: string) => {
        this.notices.push(message);
      });
  }

  get sessionId(): string {
    if (!this.session) throw new Error("no open session");
    return this.session.session_id;
  }

  isBusy(): boolean {
    return this.job?.state === "running";
  }

  objectColor(objectId: number): [number, number, number] {
    const entry = this.session?.objects.find((o) => o.object_id === objectId);
    return entry ? entry.color : [255, 255, 255];
  }

  /** Serialize mutations: at most one in-flight request. */
  private enqueue<T>(work: () => Promise<T>): Promise<T> {
    const next = this.mutationChain.then(work, work);
    this.mutationChain = next.catch(() => {});
    return next;
  }

  private applySession(state: SessionState): void {
    // revision only moves forward; a stale response never wins
    if (this.session && state.revision < this.revision) return;
    this.session = state;
    this.revision = state.revision;
    this.onChange();
  }

  async open(videoId: string): Promise<SessionState> {
    const state = await this.api.createSession(videoId);
    this.applySession(state);
    this.currentFrame = 0;
    await this.refreshOverlays();
    return state;
  }

  async refreshSession(): Promise<void> {
    if (!this.session) return;
    this.applySession(await this.api.getSession(this.sessionId));
  }

  /** Load the frame's masks (server truth) into the overlay store. */
  async refreshOverlays(): Promise<void> {
    if (!this.session) return;
    const frame = this.currentFrame;
    const response = await this.api.frameMasks(this.sessionId, frame);
    if (response.revision < this.revision || frame !== this.currentFrame) return; // stale
    this.revision = Math.max(this.revision, response.revision);
    this.overlays.clear();
    for (const entry of response.masks) {
      this.overlays.set(entry.object_id, {
        objectId: entry.object_id,
        color: this.objectColor(entry.object_id),
        mask: { width: entry.width, height: entry.height, runs: entry.runs },
        visible: !this.hiddenObjects.has(entry.object_id),
      });
    }
    this.onChange();
  }

  async selectFrame(index: number): Promise<void> {
    if (!this.session) return;
    const clamped = Math.max(0, Math.min(index, this.session.frame_count - 1));
    this.currentFrame = clamped;
    this.markers = this.markers.filter((m) => m.frame === clamped);
    await this.refreshOverlays();
  }

  async createObject(classId: number, className = ""): Promise<number> {
    return this.enqueue(async () => {
      const response = await this.api.addObject(
        this.sessionId,
        this.currentFrame,
        classId,
        className,
      );
      await this.refreshSession();
      this.selectedObject = response.object_id;
      this.onChange();
      return response.object_id;
    });
  }

  setPointMode(mode: PointMode): void {
    this.pointMode = mode;
    this.onChange();
  }

  selectObject(objectId: number): void {
    this.selectedObject = objectId;
    this.onChange();
  }

  toggleObjectVisibility(objectId: number): void {
    // client-only: hiding an overlay never touches server state
    if (this.hiddenObjects.has(objectId)) this.hiddenObjects.delete(objectId);
    else this.hiddenObjects.add(objectId);
    const overlay = this.overlays.get(objectId);
    if (overlay) overlay.visible = !this.hiddenObjects.has(objectId);
    this.onChange();
  }

  /**
   * A click on the frame. Guarded: without a selected object no request is
   * sent. Posts the point with the current polarity; the returned mask
   * replaces that object's overlay within one render cycle.
   */
  async canvasClick(x: number, y: number): Promise<boolean> {
    if (!this.session) return false;
    if (this.selectedObject === null) {
      this.onNotice("Create or select an object before placing points");
      return false;
    }
    const objectId = this.selectedObject;
    const frame = this.currentFrame;
    try {
      return await this.enqueue(async () => {
        const response = await this.api.addPoint(
          this.sessionId,
          objectId,
          frame,
          x,
          y,
          this.pointMode,
        );
        if (response.revision < this.revision) return false; // stale
        this.revision = response.revision;
        this.markers.push({ x, y, polarity: this.pointMode, objectId, frame });
        this.overlays.set(objectId, {
          objectId,
          color: this.objectColor(objectId),
          mask: response.mask,
          visible: !this.hiddenObjects.has(objectId),
        });
        this.onChange();
        return true;
      });
    } catch (error) {
      if (error instanceof ApiError) {
        this.onNotice(`${error.code}: ${error.message}`);
        return false;
      }
      throw error;
    }
  }

  async reannotate(objectId: number): Promise<void> {
    await this.enqueue(async () => {
      await this.api.reannotate(this.sessionId, objectId, this.currentFrame);
      this.markers = this.markers.filter(
        (m) => !(m.objectId === objectId && m.frame === this.currentFrame),
      );
      await this.refreshSession();
      await this.refreshOverlays();
    });
  }

  async restart(objectId?: number): Promise<void> {
    await this.enqueue(async () => {
      await this.api.restart(this.sessionId, objectId);
      if (objectId === undefined) {
        this.markers = [];
        this.selectedObject = null;
      }
      await this.refreshSession();
      await this.refreshOverlays();
    });
  }

  /** Start propagation and poll until it finishes; overlays then refresh. */
  async startPropagation(): Promise<JobStatus> {
    if (this.isBusy()) {
      this.onNotice("Propagation already running");
      return this.job!;
    }
    const { job_id } = await this.enqueue(() => this.api.propagate(this.sessionId));
    this.job = { job_id, kind: "propagation", state: "running", progress: { done: 0, total: 0 }, error: null };
    this.onChange();
    for (;;) {
      const status = await this.api.jobStatus(job_id);
      this.job = status;
      this.onChange();
      if (status.state !== "running") break;
      await sleep(this.pollIntervalMs);
    }
    await this.refreshSession();
    await this.refreshOverlays();
    return this.job;
  }

  async exportMasks(outDir?: string, merged = false) {
    const result = await this.api.exportMasks(this.sessionId, outDir, merged);
    this.onNotice(`Exported ${result.count} files to ${result.dir}`);
    return result;
  }

  /** Overlays to draw for the current frame, in object-id order. */
  visibleOverlays(): OverlayState[] {
    return [...this.overlays.values()]
      .filter((o) => o.visible)
      .sort((a, b) => a.objectId - b.objectId);
  }
}
