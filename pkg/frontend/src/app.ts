import { AnnotationApi } from './api.js';
import {
  clickPoint,
  createSession,
  discardDraft,
  finishInstance,
  requiredPoints,
  toggleDifficult,
  undoPoint,
  type Instance,
  type UiSessionState,
} from './session.js';
import { saveSession } from './save.js';
import { shortcutAction } from './shortcuts.js';
import {
  canvasToImage,
  fitTransform,
  imageToCanvas,
  pan,
  zoomAt,
  type ViewTransform,
} from './view.js';
import { formatViolation } from './validate.js';
import type { ImageInfo, Point } from './types.js';

// Scribbles are drawn 5 image-pixels wide: the same thickness the backend
// uses when rasterizing them, so the annotator sees the true footprint.
const SCRIBBLE_THICKNESS = 5;

const COLORS = {
  canvasBg: '#10151c',
  imageBg: '#e8e4da',
  scribble: 'rgba(46, 160, 67, 0.85)',
  draft: 'rgba(56, 139, 253, 0.9)',
  draftPoint: '#388bfd',
  difficult: 'rgba(219, 109, 40, 0.7)',
  difficultFill: 'rgba(219, 109, 40, 0.15)',
};

const api = new AnnotationApi('');

let images: ImageInfo[] = [];
let session: UiSessionState | null = null;
let transform: ViewTransform = { scale: 1, offsetX: 0, offsetY: 0 };
let bitmap: HTMLImageElement | null = null;
let panning: { lastX: number; lastY: number } | null = null;

const canvas = document.getElementById('canvas') as HTMLCanvasElement;
const ctx = canvas.getContext('2d') as CanvasRenderingContext2D;
const listEl = document.getElementById('image-list') as HTMLUListElement;
const statusEl = document.getElementById('status') as HTMLSpanElement;
const modeEl = document.getElementById('mode') as HTMLSpanElement;
const versionEl = document.getElementById('version') as HTMLSpanElement;
const saveBtn = document.getElementById('save') as HTMLButtonElement;
const bannerEl = document.getElementById('banner') as HTMLDivElement;
const bannerTextEl = document.getElementById('banner-text') as HTMLSpanElement;
const bannerReloadBtn = document.getElementById('banner-reload') as HTMLButtonElement;
const bannerOverwriteBtn = document.getElementById('banner-overwrite') as HTMLButtonElement;

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function hideBanner(): void {
  bannerEl.hidden = true;
}

function showConflictBanner(serverVersion: number): void {
  bannerTextEl.textContent =
    `Someone else saved this image (now at version ${serverVersion}). ` +
    'Load their copy, or overwrite it with yours.';
  bannerEl.hidden = false;
  bannerReloadBtn.onclick = () => {
    hideBanner();
    if (session) void openImage(session.imageId);
  };
  bannerOverwriteBtn.onclick = () => {
    hideBanner();
    if (session) {
      session = { ...session, version: serverVersion };
      void doSave();
    }
  };
}

function updateToolbar(): void {
  if (!session) {
    modeEl.textContent = '';
    versionEl.textContent = '';
    saveBtn.disabled = true;
    return;
  }
  const difficult = session.mode === 'difficult-polygon';
  modeEl.textContent = difficult ? 'difficult region' : 'scribble';
  modeEl.classList.toggle('difficult', difficult);
  versionEl.textContent =
    `v${session.version}${session.dirty ? ' (unsaved changes)' : ''}`;
  saveBtn.disabled = false;
}

function strokePolyline(points: readonly Point[], closed: boolean): void {
  ctx.beginPath();
  points.forEach((p, i) => {
    const c = imageToCanvas(transform, p);
    if (i === 0) ctx.moveTo(c.x, c.y);
    else ctx.lineTo(c.x, c.y);
  });
  if (closed) ctx.closePath();
  ctx.stroke();
}

function drawInstance(inst: Instance): void {
  if (inst.points.length === 0) return;
  ctx.save();
  ctx.lineCap = 'round';
  ctx.lineJoin = 'round';
  if (inst.difficult) {
    ctx.strokeStyle = COLORS.difficult;
    ctx.fillStyle = COLORS.difficultFill;
    ctx.lineWidth = Math.max(1, 1.5 * transform.scale);
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    inst.points.forEach((p, i) => {
      const c = imageToCanvas(transform, p);
      if (i === 0) ctx.moveTo(c.x, c.y);
      else ctx.lineTo(c.x, c.y);
    });
    ctx.closePath();
    ctx.fill();
    ctx.stroke();
  } else {
    ctx.strokeStyle = COLORS.scribble;
    ctx.lineWidth = SCRIBBLE_THICKNESS * transform.scale;
    strokePolyline(inst.points, false);
  }
  ctx.restore();
}

function drawDraft(points: readonly Point[]): void {
  if (points.length === 0) return;
  ctx.save();
  ctx.lineCap = 'round';
  ctx.lineJoin = 'round';
  ctx.strokeStyle = COLORS.draft;
  ctx.lineWidth = SCRIBBLE_THICKNESS * transform.scale;
  if (points.length > 1) strokePolyline(points, false);
  ctx.fillStyle = COLORS.draftPoint;
  for (const p of points) {
    const c = imageToCanvas(transform, p);
    ctx.beginPath();
    ctx.arc(c.x, c.y, 3.5, 0, Math.PI * 2);
    ctx.fill();
  }
  ctx.restore();
}

function render(): void {
  const { width, height } = canvas.getBoundingClientRect();
  canvas.width = width;
  canvas.height = height;
  ctx.fillStyle = COLORS.canvasBg;
  ctx.fillRect(0, 0, width, height);
  if (!session) return;

  const origin = imageToCanvas(transform, { x: 0, y: 0 });
  const extent = imageToCanvas(transform, {
    x: session.imageWidth,
    y: session.imageHeight,
  });
  if (bitmap) {
    ctx.drawImage(bitmap, origin.x, origin.y, extent.x - origin.x, extent.y - origin.y);
  } else {
    // pixel-less synthetic projects: draw a plain sheet of the right size
    ctx.fillStyle = COLORS.imageBg;
    ctx.fillRect(origin.x, origin.y, extent.x - origin.x, extent.y - origin.y);
  }

  for (const inst of session.instances) drawInstance(inst);
  drawDraft(session.draft);
  updateToolbar();
}

function renderImageList(): void {
  listEl.textContent = '';
  for (const info of images) {
    const item = document.createElement('li');
    const button = document.createElement('button');
    button.type = 'button';
    button.textContent = `${info.annotated ? '● ' : '○ '}${info.id}`;
    button.title = `${info.width}×${info.height}`;
    button.classList.toggle('active', session?.imageId === info.id);
    button.onclick = () => void openImage(info.id);
    item.appendChild(button);
    listEl.appendChild(item);
  }
}

function loadBitmap(imageId: string): Promise<HTMLImageElement | null> {
  return new Promise((resolve) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => resolve(null);
    img.src = api.imageFileUrl(imageId);
  });
}

async function openImage(imageId: string): Promise<void> {
  if (session?.dirty && session.imageId !== imageId) {
    const leave = window.confirm('Discard unsaved changes on this image?');
    if (!leave) return;
  }
  hideBanner();
  const info = images.find((i) => i.id === imageId);
  if (!info) return;
  const got = await api.getAnnotation(imageId);
  session = createSession(
    imageId,
    info.width,
    info.height,
    got.version,
    got.annotation,
    new URLSearchParams(window.location.search).get('annotator'),
  );
  bitmap = await loadBitmap(imageId);
  const rect = canvas.getBoundingClientRect();
  transform = fitTransform(info.width, info.height, rect.width, rect.height);
  setStatus(`opened ${imageId}`);
  renderImageList();
  render();
}

async function doSave(): Promise<void> {
  if (!session) return;
  try {
    const result = await saveSession(api, session);
    session = result.state;
    switch (result.outcome) {
      case 'saved':
        setStatus(`saved version ${result.version}`);
        renderImageList();
        break;
      case 'skipped':
        setStatus('no changes to save');
        break;
      case 'conflict':
        showConflictBanner(result.serverVersion);
        break;
      case 'invalid':
        setStatus(result.violations.map(formatViolation).join('; '));
        break;
    }
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err));
  }
  render();
}

function dispatch(action: ReturnType<typeof shortcutAction>): boolean {
  if (!session || action === null) return false;
  const now = Date.now();
  switch (action) {
    case 'finish': {
      const result = finishInstance(session, now);
      session = result.state;
      setStatus(result.error ?? 'instance finished');
      break;
    }
    case 'undo':
      session = undoPoint(session, now);
      setStatus('point removed');
      break;
    case 'toggle-difficult': {
      session = toggleDifficult(session);
      const need = requiredPoints(session.mode);
      setStatus(`${session.mode} mode (finish needs ≥ ${need} points)`);
      break;
    }
    case 'discard':
      session = discardDraft(session, now);
      setStatus('draft discarded');
      break;
    case 'save':
      void doSave();
      break;
    case 'zoom-in':
      transform = zoomAt(transform, canvasCenter(), 1.25);
      break;
    case 'zoom-out':
      transform = zoomAt(transform, canvasCenter(), 0.8);
      break;
    case 'zoom-fit': {
      const rect = canvas.getBoundingClientRect();
      transform = fitTransform(
        session.imageWidth,
        session.imageHeight,
        rect.width,
        rect.height,
      );
      break;
    }
  }
  render();
  return true;
}

function canvasCenter(): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: rect.width / 2, y: rect.height / 2 };
}

function canvasPosition(e: MouseEvent): Point {
  const rect = canvas.getBoundingClientRect();
  return { x: e.clientX - rect.left, y: e.clientY - rect.top };
}

function bindCanvas(): void {
  canvas.addEventListener('pointerdown', (e) => {
    if (e.button === 1) {
      panning = { lastX: e.clientX, lastY: e.clientY };
      canvas.setPointerCapture(e.pointerId);
      e.preventDefault();
      return;
    }
    if (e.button !== 0 || !session) return;
    const p = canvasToImage(transform, canvasPosition(e));
    const before = session;
    session = clickPoint(session, p, Date.now());
    if (session !== before) {
      setStatus(`${session.draft.length} point(s) in draft`);
      render();
    }
  });
  canvas.addEventListener('pointermove', (e) => {
    if (!panning) return;
    transform = pan(transform, e.clientX - panning.lastX, e.clientY - panning.lastY);
    panning = { lastX: e.clientX, lastY: e.clientY };
    render();
  });
  canvas.addEventListener('pointerup', () => {
    panning = null;
  });
  canvas.addEventListener(
    'wheel',
    (e) => {
      e.preventDefault();
      transform = zoomAt(transform, canvasPosition(e), e.deltaY < 0 ? 1.25 : 0.8);
      render();
    },
    { passive: false },
  );
}

function bindKeyboard(): void {
  document.addEventListener('keydown', (e) => {
    const target = e.target as HTMLElement | null;
    const action = shortcutAction({
      key: e.key,
      ctrlKey: e.ctrlKey,
      metaKey: e.metaKey,
      altKey: e.altKey,
      targetTag: target?.tagName,
      targetEditable: target?.isContentEditable,
    });
    if (action !== null && dispatch(action)) e.preventDefault();
  });
}

async function init(): Promise<void> {
  saveBtn.onclick = () => void doSave();
  bindCanvas();
  bindKeyboard();
  window.addEventListener('resize', render);
  try {
    images = await api.listImages();
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err));
    return;
  }
  renderImageList();
  const first = images[0];
  if (first) await openImage(first.id);
  else setStatus('project has no images');
}

void init();
