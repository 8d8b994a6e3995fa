import type {
  AnnotationDoc,
  CostMetrics,
  ImageInfo,
  SessionEvent,
} from './types.js';

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

/** PUT raced another writer; `version` is the server's current one. */
export class ConflictError extends ApiError {
  constructor(readonly version: number) {
    super(`version conflict: server is at version ${version}`, 409);
    this.name = 'ConflictError';
  }
}

/** The service rejected the payload; `violations` lists the rule hits. */
export class ValidationError extends ApiError {
  constructor(readonly violations: string[]) {
    super(`annotation rejected: ${violations.join('; ')}`, 422);
    this.name = 'ValidationError';
  }
}

function detailStrings(detail: unknown): string[] {
  if (Array.isArray(detail)) {
    return detail.map((d) => (typeof d === 'string' ? d : JSON.stringify(d)));
  }
  return [typeof detail === 'string' ? detail : JSON.stringify(detail)];
}

/**
 * Thin typed client for the annotation service. Everything the frontend
 * knows about the backend goes through here — there is no other channel.
 */
export class AnnotationApi {
  constructor(
    private readonly baseUrl = '',
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async parseError(res: Response): Promise<never> {
    let detail: unknown = res.statusText;
    try {
      detail = ((await res.json()) as { detail?: unknown }).detail ?? detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    if (res.status === 409) {
      const d = detail as { version?: number };
      throw new ConflictError(d.version ?? -1);
    }
    if (res.status === 422) {
      throw new ValidationError(detailStrings(detail));
    }
    throw new ApiError(detailStrings(detail).join('; '), res.status);
  }

  async listImages(): Promise<ImageInfo[]> {
    const res = await this.fetchFn(this.url('/api/images'));
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as ImageInfo[];
  }

  /** URL of the raw image bytes (404s for pixel-less synthetic sets). */
  imageFileUrl(imageId: string): string {
    return this.url(`/api/images/${encodeURIComponent(imageId)}/file`);
  }

  async getAnnotation(
    imageId: string,
  ): Promise<{ version: number; annotation: AnnotationDoc | null }> {
    const res = await this.fetchFn(
      this.url(`/api/images/${encodeURIComponent(imageId)}/annotation`),
    );
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as {
      version: number;
      annotation: AnnotationDoc | null;
    };
  }

  /** Optimistic-concurrency save; resolves to the new version number. */
  async putAnnotation(
    imageId: string,
    version: number,
    annotation: AnnotationDoc,
  ): Promise<number> {
    const res = await this.fetchFn(
      this.url(`/api/images/${encodeURIComponent(imageId)}/annotation`),
      {
        method: 'PUT',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ version, annotation }),
      },
    );
    if (!res.ok) await this.parseError(res);
    return ((await res.json()) as { version: number }).version;
  }

  /** Append timed session events; resolves to the stored count. */
  async postEvents(imageId: string, events: SessionEvent[]): Promise<number> {
    if (events.length === 0) return 0;
    const res = await this.fetchFn(
      this.url(`/api/images/${encodeURIComponent(imageId)}/events`),
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(events),
      },
    );
    if (!res.ok) await this.parseError(res);
    return ((await res.json()) as { stored: number }).stored;
  }

  async costMetrics(): Promise<CostMetrics> {
    const res = await this.fetchFn(this.url('/api/metrics/cost'));
    if (!res.ok) await this.parseError(res);
    return (await res.json()) as CostMetrics;
  }
}
