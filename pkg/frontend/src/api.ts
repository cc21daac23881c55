import {
  DecisionPayload,
  ExperimentStats,
  ItemView,
  QueueResponse,
  RejectionStats,
  decisionPayloadSchema,
  experimentStatsSchema,
  itemViewSchema,
  queueResponseSchema,
  rejectionStatsSchema,
} from './types.js'

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`)
  }
}

/** Thrown when the server reports the item was already decided or expired;
 *  the refreshed item state rides along for the conflict dialog. */
export class DecisionConflictError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
    readonly refreshed: ItemView | null,
  ) {
    super(detail)
  }
}

type Fetch = typeof fetch

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
    private readonly fetchImpl: Fetch = fetch,
  ) {}

  private headers(json = false): Record<string, string> {
    const out: Record<string, string> = {}
    if (json) out['Content-Type'] = 'application/json'
    if (this.token) out['Authorization'] = `Bearer ${this.token}`
    return out
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init)
    const body = await response.json().catch(() => ({}))
    if (!response.ok) {
      const detail =
        typeof body === 'object' && body !== null && 'detail' in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText
      throw new ApiError(response.status, detail)
    }
    return body
  }

  async getQueue(state: 'pending' | 'approved' | 'rejected' | 'expired' | 'all' = 'pending'): Promise<QueueResponse> {
    const body = await this.request(`/queue?state=${state}`, { headers: this.headers() })
    return queueResponseSchema.parse(body)
  }

  async getItem(itemId: string): Promise<ItemView> {
    const body = await this.request(`/items/${itemId}`, { headers: this.headers() })
    return itemViewSchema.parse(body)
  }

  /** Submit a decision. The payload is validated before it leaves the
   *  client, so a reason code outside the six-element taxonomy can never
   *  reach the wire; a 409/410 comes back as DecisionConflictError with the
   *  server's refreshed view of the item. */
  async submitDecision(itemId: string, payload: DecisionPayload): Promise<ItemView> {
    const validated = decisionPayloadSchema.parse(payload)
    try {
      const body = await this.request(`/items/${itemId}/decision`, {
        method: 'POST',
        headers: this.headers(true),
        body: JSON.stringify(validated),
      })
      return itemViewSchema.parse(body)
    } catch (error) {
      if (error instanceof ApiError && (error.status === 409 || error.status === 410)) {
        const refreshed = await this.getItem(itemId).catch(() => null)
        throw new DecisionConflictError(error.status, error.detail, refreshed)
      }
      throw error
    }
  }

  async getRejectionStats(): Promise<RejectionStats> {
    const body = await this.request('/stats/rejections', { headers: this.headers() })
    return rejectionStatsSchema.parse(body)
  }

  async getExperimentStats(): Promise<ExperimentStats> {
    const body = await this.request('/stats/experiment', { headers: this.headers() })
    return experimentStatsSchema.parse(body)
  }

  /** Demo/test servers only (simulated clock). */
  async advanceClock(seconds: number): Promise<void> {
    await this.request('/clock/advance', {
      method: 'POST',
      headers: this.headers(true),
      body: JSON.stringify({ seconds }),
    })
  }
}
