import { ItemView, QueueEvent, ReasonCode } from './types.js'

export type Tab = 'pending' | 'expired' | 'history' | 'dashboard'

export interface ConflictInfo {
  itemId: string
  detail: string
  refreshed: ItemView | null
}

export interface AppState {
  items: Map<string, ItemView>
  connected: boolean
  submitting: Set<string>
  conflict: ConflictInfo | null
  activeTab: Tab
}

export function initialState(): AppState {
  return {
    items: new Map(),
    connected: false,
    submitting: new Set(),
    conflict: null,
    activeTab: 'pending',
  }
}

/** Server responses are authoritative: replace whatever we had. */
export function applyItems(state: AppState, items: ItemView[]): AppState {
  const next = new Map(state.items)
  for (const item of items) next.set(item.item_id, item)
  return { ...state, items: next }
}

/** Queue events only carry (item_id, state); the full item is refetched by
 *  the controller, but updating the state flag immediately keeps the pending
 *  list honest even if that refetch is slow. */
export function applyEvent(state: AppState, event: QueueEvent): AppState {
  if (!event.item_id || !event.state) return state
  const existing = state.items.get(event.item_id)
  if (!existing || existing.state === event.state) return state
  const next = new Map(state.items)
  next.set(event.item_id, { ...existing, state: event.state, seconds_remaining: 0 })
  return { ...state, items: next }
}

export function setConnected(state: AppState, connected: boolean): AppState {
  return state.connected === connected ? state : { ...state, connected }
}

export function beginSubmit(state: AppState, itemId: string): AppState {
  const submitting = new Set(state.submitting)
  submitting.add(itemId)
  return { ...state, submitting }
}

export function endSubmit(state: AppState, itemId: string): AppState {
  const submitting = new Set(state.submitting)
  submitting.delete(itemId)
  return { ...state, submitting }
}

export function isSubmitting(state: AppState, itemId: string): boolean {
  return state.submitting.has(itemId)
}

export function setConflict(state: AppState, conflict: ConflictInfo | null): AppState {
  return { ...state, conflict }
}

export function setTab(state: AppState, tab: Tab): AppState {
  return { ...state, activeTab: tab }
}

/** Pending items sorted by deadline ascending; expired items never show here. */
export function pendingItems(state: AppState): ItemView[] {
  return [...state.items.values()]
    .filter((i) => i.state === 'pending')
    .sort((a, b) => a.deadline.localeCompare(b.deadline) || a.item_id.localeCompare(b.item_id))
}

export function expiredItems(state: AppState): ItemView[] {
  return [...state.items.values()]
    .filter((i) => i.state === 'expired')
    .sort((a, b) => a.deadline.localeCompare(b.deadline) || a.item_id.localeCompare(b.item_id))
}

export function decidedItems(state: AppState): ItemView[] {
  return [...state.items.values()]
    .filter((i) => i.state === 'approved' || i.state === 'rejected')
    .sort((a, b) => (b.decided_at ?? '').localeCompare(a.decided_at ?? ''))
}

/** Histogram over locally known rejected items, keyed by taxonomy code. */
export function rejectionHistogram(state: AppState): Record<string, number> {
  const out: Record<string, number> = {}
  for (const item of state.items.values()) {
    if (item.state === 'rejected' && item.reason_code) {
      out[item.reason_code] = (out[item.reason_code] ?? 0) + 1
    }
  }
  return out
}

export type { ItemView, QueueEvent, ReasonCode }
