import { AnnotationApi, ConflictError } from './api.js';
import {
  applySaved,
  buildDocument,
  takePendingEvents,
  type UiSessionState,
} from './session.js';
import { validateDocument, type Violation } from './validate.js';

export type SaveResult =
  | { outcome: 'saved'; state: UiSessionState; version: number }
  | { outcome: 'skipped'; state: UiSessionState }
  | { outcome: 'conflict'; state: UiSessionState; serverVersion: number }
  | { outcome: 'invalid'; state: UiSessionState; violations: Violation[] };

/**
 * Persist one session: flush queued events, then PUT the document under
 * the last-seen version.
 *
 * - A session with no unsaved changes skips the PUT (events still flush),
 *   so saving twice in a row does not bump the version.
 * - A 409 reports the server's version and leaves the local state intact
 *   for the caller to resolve.
 * - The document is checked against the service's rules first; by
 *   construction the session cannot produce an invalid one, so `invalid`
 *   is a guard outcome, not an expected path.
 */
export async function saveSession(
  api: AnnotationApi,
  state: UiSessionState,
): Promise<SaveResult> {
  const doc = buildDocument(state);
  const violations = validateDocument(doc);
  if (violations.length > 0) {
    return { outcome: 'invalid', state, violations };
  }
  const taken = takePendingEvents(state);
  if (taken.events.length > 0) {
    await api.postEvents(state.imageId, taken.events);
  }
  const flushed = taken.state;
  if (!flushed.dirty) {
    return { outcome: 'skipped', state: flushed };
  }
  try {
    const version = await api.putAnnotation(state.imageId, flushed.version, doc);
    return { outcome: 'saved', state: applySaved(flushed, version), version };
  } catch (err) {
    if (err instanceof ConflictError) {
      return { outcome: 'conflict', state: flushed, serverVersion: err.version };
    }
    throw err;
  }
}
