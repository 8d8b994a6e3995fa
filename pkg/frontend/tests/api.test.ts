import { describe, expect, it } from 'vitest';
import {
  AnnotationApi,
  ApiError,
  ConflictError,
  ValidationError,
} from '../src/api.js';
import type { AnnotationDoc, SessionEvent } from '../src/types.js';

interface Recorded {
  url: string;
  method: string;
  body: unknown;
}

/** A fetch stub that records the request and replays a canned response. */
function stub(
  status: number,
  payload: unknown,
): { fetchFn: typeof fetch; calls: Recorded[] } {
  const calls: Recorded[] = [];
  const fetchFn = (async (input: RequestInfo | URL, init?: RequestInit) => {
    calls.push({
      url: String(input),
      method: init?.method ?? 'GET',
      body: init?.body === undefined ? undefined : JSON.parse(String(init.body)),
    });
    return new Response(JSON.stringify(payload), {
      status,
      headers: { 'Content-Type': 'application/json' },
    });
  }) as typeof fetch;
  return { fetchFn, calls };
}

const DOC: AnnotationDoc = {
  version: '1.0',
  image: { id: 'img a', width: 10, height: 10 },
  instances: [{ id: 0, points: [[1, 1], [2, 2]], difficult: false }],
};

describe('AnnotationApi', () => {
  it('lists images', async () => {
    const payload = [
      { id: 'a', width: 4, height: 5, annotated: true },
    ];
    const { fetchFn, calls } = stub(200, payload);
    const api = new AnnotationApi('http://host:1', fetchFn);
    expect(await api.listImages()).toEqual(payload);
    expect(calls[0]).toEqual({
      url: 'http://host:1/api/images',
      method: 'GET',
      body: undefined,
    });
  });

  it('builds escaped file URLs', () => {
    const api = new AnnotationApi('http://host:1');
    expect(api.imageFileUrl('img a')).toBe(
      'http://host:1/api/images/img%20a/file',
    );
  });

  it('reads annotations, null included', async () => {
    const { fetchFn } = stub(200, { version: 3, annotation: null });
    const api = new AnnotationApi('', fetchFn);
    expect(await api.getAnnotation('x')).toEqual({
      version: 3,
      annotation: null,
    });
  });

  it('sends the nested version/annotation body on PUT', async () => {
    const { fetchFn, calls } = stub(200, { version: 4 });
    const api = new AnnotationApi('', fetchFn);
    expect(await api.putAnnotation('img a', 3, DOC)).toBe(4);
    expect(calls[0]!.method).toBe('PUT');
    expect(calls[0]!.url).toBe('/api/images/img%20a/annotation');
    expect(calls[0]!.body).toEqual({ version: 3, annotation: DOC });
  });

  it('turns 409 into ConflictError carrying the server version', async () => {
    const { fetchFn } = stub(409, {
      detail: { message: 'version conflict', version: 7 },
    });
    const api = new AnnotationApi('', fetchFn);
    const err = await api.putAnnotation('x', 3, DOC).catch((e) => e);
    expect(err).toBeInstanceOf(ConflictError);
    expect((err as ConflictError).version).toBe(7);
  });

  it('turns 422 into ValidationError with the rule strings', async () => {
    const { fetchFn } = stub(422, {
      detail: ['instance 0: out-of-bounds: point (−1, 0)…'],
    });
    const api = new AnnotationApi('', fetchFn);
    const err = await api.putAnnotation('x', 0, DOC).catch((e) => e);
    expect(err).toBeInstanceOf(ValidationError);
    expect((err as ValidationError).violations[0]).toContain('out-of-bounds');
  });

  it('stringifies structured 422 details', async () => {
    const { fetchFn } = stub(422, {
      detail: [{ loc: ['body', 0], msg: 'bad' }],
    });
    const api = new AnnotationApi('', fetchFn);
    const err = await api.postEvents('x', [
      { image_id: 'x', instance_id: 0, event: 'start', timestamp_ms: 1 },
    ]).catch((e) => e);
    expect(err).toBeInstanceOf(ValidationError);
    expect((err as ValidationError).violations[0]).toContain('bad');
  });

  it('posts events and skips empty batches', async () => {
    const { fetchFn, calls } = stub(200, { stored: 2 });
    const api = new AnnotationApi('', fetchFn);
    const events: SessionEvent[] = [
      { image_id: 'x', instance_id: 0, event: 'start', timestamp_ms: 5 },
      { image_id: 'x', instance_id: 0, event: 'finish', timestamp_ms: 9 },
    ];
    expect(await api.postEvents('x', events)).toBe(2);
    expect(calls[0]!.body).toEqual(events);
    expect(await api.postEvents('x', [])).toBe(0);
    expect(calls).toHaveLength(1); // no request went out for the empty batch
  });

  it('raises ApiError for other failures', async () => {
    const { fetchFn } = stub(404, { detail: "unknown image 'nope'" });
    const api = new AnnotationApi('', fetchFn);
    const err = await api.getAnnotation('nope').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).message).toContain('unknown image');
  });

  it('fetches cost metrics', async () => {
    const payload = {
      avg_points_per_instance: 3.5,
      avg_label_time_ms: null,
      instance_count: 12,
    };
    const { fetchFn, calls } = stub(200, payload);
    const api = new AnnotationApi('', fetchFn);
    expect(await api.costMetrics()).toEqual(payload);
    expect(calls[0]!.url).toBe('/api/metrics/cost');
  });
});
