import { ApiClient, DecisionConflictError } from './api.js'
import { ClockSync } from './clockSync.js'
import { subscribeQueueEvents } from './sse.js'
import {
  AppState,
  Tab,
  applyEvent,
  applyItems,
  beginSubmit,
  endSubmit,
  initialState,
  isSubmitting,
  setConflict,
  setConnected,
  setTab,
} from './state.js'
import { DecisionPayload, ExperimentStats, QueueEvent, REASON_CODES, ReasonCode, RejectionStats } from './types.js'
import { render } from './view.js'

export interface AppOptions {
  reviewer?: string
  fetchImpl?: typeof fetch
  token?: string
  renderIntervalMs?: number
}

/** The reviewer console controller: one SSE subscription, optimistic local
 *  state, server as the source of truth on every conflict. */
export class App {
  readonly clock = new ClockSync()
  state: AppState = initialState()
  private rejections: RejectionStats | null = null
  private experiment: ExperimentStats | null = null
  private readonly api: ApiClient
  private readonly reviewer: string
  private unsubscribe: (() => void) | null = null
  private ticker: ReturnType<typeof setInterval> | null = null

  constructor(
    private readonly root: HTMLElement,
    private readonly baseUrl: string,
    private readonly options: AppOptions = {},
  ) {
    this.api = new ApiClient(baseUrl, options.token, options.fetchImpl)
    this.reviewer = options.reviewer ?? 'console-reviewer'
  }

  /** Direct API access for dashboards and test harnesses. */
  getApi(): ApiClient {
    return this.api
  }

  async start(): Promise<void> {
    await this.refreshAll()
    this.unsubscribe = subscribeQueueEvents(
      this.baseUrl,
      {
        onEvent: (event) => void this.handleEvent(event),
        onConnected: () => this.update((s) => setConnected(s, true)),
        onDisconnected: () => this.update((s) => setConnected(s, false)),
      },
      { token: this.options.token, fetchImpl: this.options.fetchImpl },
    )
    this.ticker = setInterval(() => this.renderNow(), this.options.renderIntervalMs ?? 500)
    this.renderNow()
  }

  stop(): void {
    this.unsubscribe?.()
    if (this.ticker) clearInterval(this.ticker)
  }

  /** Pull every tab's data; used at startup and after reconnects. */
  async refreshAll(): Promise<void> {
    const all = await this.api.getQueue('all')
    this.clock.update(all.now)
    this.update((s) => applyItems(s, all.items))
    await this.refreshStats()
  }

  async refreshStats(): Promise<void> {
    this.rejections = await this.api.getRejectionStats().catch(() => null)
    this.experiment = await this.api.getExperimentStats().catch(() => null)
  }

  private async handleEvent(event: QueueEvent): Promise<void> {
    if (event.now) this.clock.update(event.now)
    this.update((s) => setConnected(s, true))
    if (event.type === 'hello') {
      await this.refreshAll()
    } else if (event.item_id && event.type !== 'heartbeat') {
      this.update((s) => applyEvent(s, event))
      const item = await this.api.getItem(event.item_id).catch(() => null)
      if (item) this.update((s) => applyItems(s, [item]))
      if (event.type === 'decided' || event.type === 'expired') await this.refreshStats()
    }
    this.renderNow()
  }

  approve(itemId: string): void {
    void this.submit(itemId, { decision: 'approve', reviewer: this.reviewer })
  }

  reject(itemId: string, code: string, note: string): void {
    if (!(REASON_CODES as readonly string[]).includes(code)) {
      throw new Error(`reason code ${code} is outside the taxonomy`)
    }
    const payload: DecisionPayload = {
      decision: 'reject',
      reason_code: code as ReasonCode,
      reviewer: this.reviewer,
      ...(note ? { note } : {}),
    }
    void this.submit(itemId, payload)
  }

  private async submit(itemId: string, payload: DecisionPayload): Promise<void> {
    if (isSubmitting(this.state, itemId)) return // double-submit guard
    this.update((s) => beginSubmit(s, itemId))
    try {
      const item = await this.api.submitDecision(itemId, payload)
      this.update((s) => applyItems(s, [item]))
      await this.refreshStats()
    } catch (error) {
      if (error instanceof DecisionConflictError) {
        if (error.refreshed) this.update((s) => applyItems(s, [error.refreshed!]))
        this.update((s) => setConflict(s, { itemId, detail: error.detail, refreshed: error.refreshed }))
      } else {
        throw error
      }
    } finally {
      this.update((s) => endSubmit(s, itemId))
      this.renderNow()
    }
  }

  setTab(tab: Tab): void {
    this.update((s) => setTab(s, tab))
    this.renderNow()
  }

  dismissConflict(): void {
    this.update((s) => setConflict(s, null))
    this.renderNow()
  }

  private update(fn: (s: AppState) => AppState): void {
    this.state = fn(this.state)
  }

  renderNow(): void {
    render(
      this.root,
      this.state,
      this.clock,
      {
        onApprove: (id) => this.approve(id),
        onReject: (id, code, note) => this.reject(id, code, note),
        onTab: (tab) => this.setTab(tab),
        onDismissConflict: () => this.dismissConflict(),
      },
      { rejections: this.rejections, experiment: this.experiment },
    )
  }
}
