import type { Point } from './types.js';

/**
 * Affine image->canvas mapping: canvas = image * scale + offset.
 * All annotation coordinates live in image pixel space; the transform is
 * applied only when drawing and inverted on pointer input, so zoom and pan
 * never leak into persisted data.
 */
export interface ViewTransform {
  scale: number;
  offsetX: number;
  offsetY: number;
}

export const MIN_SCALE = 0.05;
export const MAX_SCALE = 40;

export function imageToCanvas(t: ViewTransform, p: Point): Point {
  return { x: p.x * t.scale + t.offsetX, y: p.y * t.scale + t.offsetY };
}

export function canvasToImage(t: ViewTransform, p: Point): Point {
  return { x: (p.x - t.offsetX) / t.scale, y: (p.y - t.offsetY) / t.scale };
}

/** Largest centered view that shows the whole image with a margin. */
export function fitTransform(
  imageWidth: number,
  imageHeight: number,
  canvasWidth: number,
  canvasHeight: number,
  margin = 16,
): ViewTransform {
  const usableW = Math.max(1, canvasWidth - 2 * margin);
  const usableH = Math.max(1, canvasHeight - 2 * margin);
  const scale = Math.min(usableW / imageWidth, usableH / imageHeight);
  return {
    scale,
    offsetX: (canvasWidth - imageWidth * scale) / 2,
    offsetY: (canvasHeight - imageHeight * scale) / 2,
  };
}

/** Rescale around a canvas anchor so the image point under it stays put. */
export function zoomAt(
  t: ViewTransform,
  anchor: Point,
  factor: number,
): ViewTransform {
  const scale = Math.min(MAX_SCALE, Math.max(MIN_SCALE, t.scale * factor));
  const ratio = scale / t.scale;
  return {
    scale,
    offsetX: anchor.x - (anchor.x - t.offsetX) * ratio,
    offsetY: anchor.y - (anchor.y - t.offsetY) * ratio,
  };
}

export function pan(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { ...t, offsetX: t.offsetX + dx, offsetY: t.offsetY + dy };
}
