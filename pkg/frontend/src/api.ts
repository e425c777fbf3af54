/**
 * Typed client for the review service JSON API.
 *
 * Endpoints consumed verbatim:
 *   GET  /health
 *   GET  /sessions/{id}[?rater=]
 *   GET  /sessions/{id}/rounds/{k}/pending?rater=
 *   POST /sessions/{id}/items/{item}/score   {rater_id, value}
 *   GET  /sessions/{id}/rounds/{k}/aggregate
 *   GET  /images/{poem_id}.png
 *
 * The UI performs no arithmetic on scores: every displayed number comes
 * straight out of one of these responses.
 */

export interface RoundView {
  round: number
  template_id: string
  template_text: string | null
  status: 'open' | 'closed'
  aggregate: number | null
  automated_metrics: Record<string, number>
  complete: boolean
  rater_count: number
  item_count: number
}

export interface SessionView {
  session_id: string
  mode: 'summary' | 'image'
  aggregation: 'sum' | 'mean'
  current_round: number | null
  stopped: boolean
  selected_round: number | null
  selected_template_id: string | null
  raters: string[]
  rounds: RoundView[]
  pending_count?: number
}

export interface ItemPayload {
  summary_text?: string
  reference_text?: string
  image_ref?: string
  poem_text?: string
}

export interface ReviewItem {
  item_id: string
  session_id: string
  round_index: number
  poem_text: string
  payload: ItemPayload
  blind: boolean
}

export interface AggregateView {
  aggregate: number
  rater_count: number
  complete: boolean
}

export interface StoredScore {
  stored: {
    round_index: number
    item_id: string
    rater_id: string
    value: number
    source: string
    created_at: string
  }
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message)
    this.name = 'ApiError'
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class ReviewApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init)
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`)
    }
    const body = await response.json().catch(() => ({}))
    if (!response.ok) {
      const message =
        typeof body === 'object' && body !== null && 'error' in body
          ? String((body as { error: unknown }).error)
          : `HTTP ${response.status}`
      throw new ApiError(response.status, message)
    }
    return body as T
  }

  health(): Promise<{ status: string }> {
    return this.request('/health')
  }

  getSession(sessionId: string, raterId?: string): Promise<SessionView> {
    const query = raterId ? `?rater=${encodeURIComponent(raterId)}` : ''
    return this.request(`/sessions/${encodeURIComponent(sessionId)}${query}`)
  }

  getPending(sessionId: string, round: number, raterId: string): Promise<ReviewItem[]> {
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/rounds/${round}/pending` +
        `?rater=${encodeURIComponent(raterId)}`,
    )
  }

  submitScore(
    sessionId: string,
    itemId: string,
    raterId: string,
    value: number,
  ): Promise<StoredScore> {
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/items/${encodeURIComponent(itemId)}/score`,
      {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ rater_id: raterId, value }),
      },
    )
  }

  getAggregate(sessionId: string, round: number): Promise<AggregateView> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/rounds/${round}/aggregate`)
  }

  imageUrl(ref: string): string {
    if (ref.startsWith('http://') || ref.startsWith('https://') || ref.startsWith('/')) {
      return ref.startsWith('/') ? `${this.baseUrl}${ref}` : ref
    }
    return `${this.baseUrl}/images/${encodeURIComponent(ref)}`
  }
}
