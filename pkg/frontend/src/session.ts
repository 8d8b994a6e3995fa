import {
  ANNOTATION_FORMAT_VERSION,
  type AnnotationDoc,
  type InstanceEntry,
  type Point,
  type SessionEvent,
} from './types.js';

export type ToolMode = 'scribble' | 'difficult-polygon';

/** A labeled instance held in memory (image pixel coordinates). */
export interface Instance {
  id: number;
  points: Point[];
  difficult: boolean;
  transcript?: string;
  labelTimeMs?: number;
}

/**
 * Complete labeling state for one image. All functions below are pure:
 * they take the state (plus a clock reading where timing matters) and
 * return a new one, which keeps every rule unit-testable without a DOM.
 *
 * Invariants maintained by construction:
 * - `timerStart` is non-null exactly when `draft` is nonempty;
 * - `version` is the version seen at the last GET or PUT;
 * - finished instances always satisfy the document rules, so the built
 *   document is always accepted by the service.
 */
export interface UiSessionState {
  readonly imageId: string;
  readonly imageWidth: number;
  readonly imageHeight: number;
  readonly annotator: string | null;
  readonly mode: ToolMode;
  readonly version: number;
  readonly instances: readonly Instance[];
  /** In-progress click points, in image coordinates. */
  readonly draft: readonly Point[];
  /** Clock reading at the draft's first click; null while no draft. */
  readonly timerStart: number | null;
  readonly nextInstanceId: number;
  /** True when finished instances differ from the last saved state. */
  readonly dirty: boolean;
  /** Events accumulated since the last flush, in emission order. */
  readonly pendingEvents: readonly SessionEvent[];
}

function instanceFromEntry(entry: InstanceEntry): Instance {
  const inst: Instance = {
    id: entry.id,
    points: entry.points.map(([x, y]) => ({ x, y })),
    difficult: entry.difficult,
  };
  if (entry.transcript !== undefined) inst.transcript = entry.transcript;
  if (entry.label_time_ms !== undefined) inst.labelTimeMs = entry.label_time_ms;
  return inst;
}

/** Start a session from the service's GET response for one image. */
export function createSession(
  imageId: string,
  imageWidth: number,
  imageHeight: number,
  version: number,
  doc: AnnotationDoc | null,
  annotator: string | null = null,
): UiSessionState {
  const instances = doc === null ? [] : doc.instances.map(instanceFromEntry);
  const maxId = instances.reduce((m, inst) => Math.max(m, inst.id), -1);
  return {
    imageId,
    imageWidth,
    imageHeight,
    annotator,
    mode: 'scribble',
    version,
    instances,
    draft: [],
    timerStart: null,
    nextInstanceId: maxId + 1,
    dirty: false,
    pendingEvents: [],
  };
}

/** Points required to finish in the given tool mode. */
export function requiredPoints(mode: ToolMode): number {
  return mode === 'difficult-polygon' ? 3 : 2;
}

function emit(
  state: UiSessionState,
  event: SessionEvent['event'],
  now: number,
): SessionEvent {
  return {
    image_id: state.imageId,
    instance_id: state.nextInstanceId,
    event,
    timestamp_ms: now,
  };
}

/**
 * Append a click to the in-progress instance. The position must already be
 * in image coordinates (the caller inverts the view transform); clicks
 * outside the image are ignored. The first click starts the instance timer
 * and emits a `start` event; every click emits a `point` event.
 */
export function clickPoint(
  state: UiSessionState,
  p: Point,
  now: number,
): UiSessionState {
  const inside =
    p.x >= 0 && p.x <= state.imageWidth && p.y >= 0 && p.y <= state.imageHeight;
  if (!inside) return state;
  const events: SessionEvent[] = [];
  let timerStart = state.timerStart;
  if (state.draft.length === 0) {
    timerStart = now;
    events.push(emit(state, 'start', now));
  }
  events.push(emit(state, 'point', now));
  return {
    ...state,
    draft: [...state.draft, p],
    timerStart,
    pendingEvents: [...state.pendingEvents, ...events],
  };
}

function abandonDraft(state: UiSessionState, now: number): UiSessionState {
  // The abandoned id is retired so its start/finish timing on the service
  // can never get entangled with a later attempt.
  return {
    ...state,
    draft: [],
    timerStart: null,
    nextInstanceId: state.nextInstanceId + 1,
    pendingEvents: [...state.pendingEvents, emit(state, 'discard', now)],
  };
}

/**
 * Remove the most recent draft point. Finished instances are never
 * touched; removing the last remaining point abandons the instance
 * (emitting a `discard` event) and stops its timer.
 */
export function undoPoint(state: UiSessionState, now: number): UiSessionState {
  if (state.draft.length === 0) return state;
  const draft = state.draft.slice(0, -1);
  if (draft.length > 0) return { ...state, draft };
  return abandonDraft(state, now);
}

/** Abandon the whole in-progress instance, if any. */
export function discardDraft(
  state: UiSessionState,
  now: number,
): UiSessionState {
  if (state.draft.length === 0) return state;
  return abandonDraft(state, now);
}

/**
 * Commit the in-progress points as a finished instance. Scribble mode
 * needs at least 2 points; difficult-polygon mode needs at least 3 (a
 * region outline). On success the elapsed time since the first click is
 * recorded, a `finish` event is emitted, and a fresh instance id is
 * reserved for the next draft.
 */
export function finishInstance(
  state: UiSessionState,
  now: number,
): { state: UiSessionState; error: string | null } {
  const need = requiredPoints(state.mode);
  if (state.draft.length < need) {
    const kind = state.mode === 'difficult-polygon' ? 'difficult region' : 'scribble';
    return {
      state,
      error:
        `a ${kind} needs at least ${need} points; ` +
        `got ${state.draft.length}`,
    };
  }
  const instance: Instance = {
    id: state.nextInstanceId,
    points: [...state.draft],
    difficult: state.mode === 'difficult-polygon',
    labelTimeMs: Math.max(0, now - (state.timerStart ?? now)),
  };
  const next: UiSessionState = {
    ...state,
    instances: [...state.instances, instance],
    draft: [],
    timerStart: null,
    nextInstanceId: state.nextInstanceId + 1,
    dirty: true,
    pendingEvents: [...state.pendingEvents, emit(state, 'finish', now)],
  };
  return { state: next, error: null };
}

/** Switch between scribble and difficult-polygon tools. */
export function toggleDifficult(state: UiSessionState): UiSessionState {
  const mode: ToolMode =
    state.mode === 'scribble' ? 'difficult-polygon' : 'scribble';
  return { ...state, mode };
}

/** Serialize the finished instances as a service-ready document. */
export function buildDocument(state: UiSessionState): AnnotationDoc {
  const instances: InstanceEntry[] = state.instances.map((inst) => {
    const entry: InstanceEntry = {
      id: inst.id,
      points: inst.points.map((p): [number, number] => [p.x, p.y]),
      difficult: inst.difficult,
    };
    if (inst.transcript !== undefined) entry.transcript = inst.transcript;
    if (inst.labelTimeMs !== undefined) entry.label_time_ms = inst.labelTimeMs;
    return entry;
  });
  return {
    version: ANNOTATION_FORMAT_VERSION,
    image: {
      id: state.imageId,
      width: state.imageWidth,
      height: state.imageHeight,
    },
    instances,
  };
}

/** Drain the event queue for posting; the events stay in emission order. */
export function takePendingEvents(state: UiSessionState): {
  state: UiSessionState;
  events: SessionEvent[];
} {
  return {
    state: { ...state, pendingEvents: [] },
    events: [...state.pendingEvents],
  };
}

/** Record a successful PUT: adopt the new version, clear the dirty flag. */
export function applySaved(
  state: UiSessionState,
  version: number,
): UiSessionState {
  return { ...state, version, dirty: false };
}
