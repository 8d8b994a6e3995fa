/** Shared data shapes for the scribble annotation client. */

export interface Point {
  x: number;
  y: number;
}

/** One entry from GET /api/images. */
export interface ImageInfo {
  id: string;
  width: number;
  height: number;
  annotated: boolean;
}

/** Wire form of one labeled instance inside an annotation document. */
export interface InstanceEntry {
  id: number;
  points: [number, number][];
  difficult: boolean;
  transcript?: string;
  label_time_ms?: number;
}

/** Wire form of a whole annotation file. */
export interface AnnotationDoc {
  version: string;
  image: { id: string; width: number; height: number };
  instances: InstanceEntry[];
}

/** File-format version stamped into every document we produce. */
export const ANNOTATION_FORMAT_VERSION = '1.0';

export type EventKind = 'start' | 'point' | 'finish' | 'discard';

/** Timed labeling event streamed to POST /api/images/{id}/events. */
export interface SessionEvent {
  image_id: string;
  instance_id: number;
  event: EventKind;
  timestamp_ms: number;
}

/** Response of GET /api/metrics/cost. */
export interface CostMetrics {
  avg_points_per_instance: number | null;
  avg_label_time_ms: number | null;
  instance_count: number;
}
