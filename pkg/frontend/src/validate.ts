import type { AnnotationDoc } from './types.js';

/** A single rule breach found by validateDocument. */
export interface Violation {
  instanceId: number | null;
  rule: string;
  detail: string;
}

export function formatViolation(v: Violation): string {
  const where = v.instanceId === null ? 'image' : `instance ${v.instanceId}`;
  return `${where}: ${v.rule}: ${v.detail}`;
}

/**
 * Client-side copy of the service's annotation rules, rule names included.
 * A document that passes here is accepted by PUT; anything flagged would
 * come back as a 422 with the same rule in the detail strings.
 */
export function validateDocument(doc: AnnotationDoc): Violation[] {
  const out: Violation[] = [];
  const { width, height } = doc.image;
  if (width <= 0 || height <= 0) {
    out.push({
      instanceId: null,
      rule: 'image-size',
      detail: `width/height must be positive, got ${width}x${height}`,
    });
  }
  const seen = new Set<number>();
  for (const inst of doc.instances) {
    if (seen.has(inst.id)) {
      out.push({
        instanceId: inst.id,
        rule: 'duplicate-id',
        detail: 'instance id reused within the image',
      });
    }
    seen.add(inst.id);
    if (!inst.difficult && inst.points.length < 2) {
      out.push({
        instanceId: inst.id,
        rule: 'min-points',
        detail:
          `non-difficult instance has ${inst.points.length} point(s); ` +
          'at least 2 required',
      });
    }
    for (const [x, y] of inst.points) {
      // the negated form also flags NaN coordinates
      if (!(x >= 0 && x <= width && y >= 0 && y <= height)) {
        out.push({
          instanceId: inst.id,
          rule: 'out-of-bounds',
          detail: `point (${x}, ${y}) outside [0, ${width}] x [0, ${height}]`,
        });
      }
    }
    if (inst.label_time_ms !== undefined && inst.label_time_ms < 0) {
      out.push({
        instanceId: inst.id,
        rule: 'negative-label-time',
        detail: `label_time_ms is ${inst.label_time_ms}`,
      });
    }
  }
  return out;
}
