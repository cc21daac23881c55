import { ClockSync, formatCountdown, secondsRemaining } from './clockSync.js'
import {
  AppState,
  Tab,
  decidedItems,
  expiredItems,
  isSubmitting,
  pendingItems,
  rejectionHistogram,
} from './state.js'
import { ExperimentStats, ItemView, REASON_CODES, REASON_LABELS, RejectionStats } from './types.js'

export interface ViewCallbacks {
  onApprove: (itemId: string) => void
  onReject: (itemId: string, code: string, note: string) => void
  onTab: (tab: Tab) => void
  onDismissConflict: () => void
}

const TABS: { id: Tab; label: string }[] = [
  { id: 'pending', label: 'Pending' },
  { id: 'expired', label: 'Expired' },
  { id: 'history', label: 'History' },
  { id: 'dashboard', label: 'Dashboard' },
]

export function render(
  root: HTMLElement,
  state: AppState,
  clock: ClockSync,
  callbacks: ViewCallbacks,
  dashboard: { rejections: RejectionStats | null; experiment: ExperimentStats | null },
): void {
  root.textContent = ''
  if (!state.connected) {
    const banner = el('div', 'banner-disconnected', 'Disconnected from review API — data may be stale')
    banner.dataset.testid = 'disconnected-banner'
    root.appendChild(banner)
  }
  root.appendChild(renderTabs(state, callbacks))
  const main = el('main', 'panel')
  switch (state.activeTab) {
    case 'pending':
      main.appendChild(renderPending(state, clock, callbacks))
      break
    case 'expired':
      main.appendChild(renderSimpleList(expiredItems(state), 'expired-list', 'No expired items'))
      break
    case 'history':
      main.appendChild(renderHistory(state))
      break
    case 'dashboard':
      main.appendChild(renderDashboard(state, dashboard))
      break
  }
  root.appendChild(main)
  if (state.conflict) root.appendChild(renderConflict(state, callbacks))
}

function renderTabs(state: AppState, callbacks: ViewCallbacks): HTMLElement {
  const nav = el('nav', 'tabs')
  for (const tab of TABS) {
    const count =
      tab.id === 'pending'
        ? pendingItems(state).length
        : tab.id === 'expired'
          ? expiredItems(state).length
          : null
    const button = el(
      'button',
      state.activeTab === tab.id ? 'tab active' : 'tab',
      count === null ? tab.label : `${tab.label} (${count})`,
    )
    button.dataset.testid = `tab-${tab.id}`
    button.addEventListener('click', () => callbacks.onTab(tab.id))
    nav.appendChild(button)
  }
  return nav
}

function renderPending(state: AppState, clock: ClockSync, callbacks: ViewCallbacks): HTMLElement {
  const items = pendingItems(state)
  if (items.length === 0) {
    const empty = el('div', 'empty-state', 'Queue is clear — nothing waiting for review')
    empty.dataset.testid = 'empty-state'
    return empty
  }
  const list = el('div', 'item-list')
  list.dataset.testid = 'pending-list'
  for (const item of items) list.appendChild(renderPendingCard(item, state, clock, callbacks))
  return list
}

function renderPendingCard(
  item: ItemView,
  state: AppState,
  clock: ClockSync,
  callbacks: ViewCallbacks,
): HTMLElement {
  const card = el('article', 'card')
  card.dataset.itemId = item.item_id
  const remaining = secondsRemaining(item.deadline, clock)
  const countdown = el('span', remaining < 300 ? 'countdown urgent' : 'countdown', formatCountdown(remaining))
  countdown.dataset.testid = 'countdown'
  countdown.dataset.deadline = item.deadline

  const head = el('header', 'card-head')
  head.appendChild(el('span', `kind kind-${item.kind}`, item.kind))
  head.appendChild(countdown)
  card.appendChild(head)

  card.appendChild(labelled('Target', item.target_text ?? item.target_post_id))
  if (item.reply_text) {
    card.appendChild(labelled('Generated reply', item.reply_text))
    if (item.cited_urls.length) {
      card.appendChild(labelled('Cited', item.cited_urls.join(' ')))
    }
    if (item.retrieval_scores.length) {
      const scores = item.retrieval_scores.map(([t, s]) => `${t} (${s.toFixed(3)})`).join('; ')
      card.appendChild(labelled('Retrieved articles', scores))
    }
  } else {
    card.appendChild(labelled('Check', 'Control-group screening: is the target actually harmful?'))
  }

  const busy = isSubmitting(state, item.item_id)
  const actions = el('div', 'actions')
  const approve = el('button', 'approve', item.kind === 'control' ? 'Keep' : 'Approve & post') as HTMLButtonElement
  approve.dataset.testid = 'approve'
  approve.disabled = busy
  approve.addEventListener('click', () => callbacks.onApprove(item.item_id))
  actions.appendChild(approve)

  const select = el('select', 'reason-select') as HTMLSelectElement
  select.dataset.testid = 'reason-select'
  const placeholder = el('option', '', 'Rejection reason…') as HTMLOptionElement
  placeholder.value = ''
  select.appendChild(placeholder)
  const codes = item.kind === 'control' ? (['not_harmful_false_positive'] as const) : REASON_CODES
  for (const code of codes) {
    const option = el('option', '', REASON_LABELS[code]) as HTMLOptionElement
    option.value = code
    select.appendChild(option)
  }
  actions.appendChild(select)

  const note = el('input', 'note-input') as HTMLInputElement
  note.placeholder = 'optional note'
  actions.appendChild(note)

  const reject = el('button', 'reject', 'Reject') as HTMLButtonElement
  reject.dataset.testid = 'reject'
  reject.disabled = busy
  reject.addEventListener('click', () => {
    if (!select.value) {
      select.classList.add('invalid')
      return
    }
    callbacks.onReject(item.item_id, select.value, note.value)
  })
  actions.appendChild(reject)
  card.appendChild(actions)
  return card
}

function renderSimpleList(items: ItemView[], testid: string, emptyText: string): HTMLElement {
  const wrap = el('div', 'item-list')
  wrap.dataset.testid = testid
  if (items.length === 0) {
    wrap.appendChild(el('div', 'empty-state', emptyText))
    return wrap
  }
  for (const item of items) {
    const card = el('article', 'card muted')
    card.dataset.itemId = item.item_id
    card.appendChild(el('header', 'card-head', `${item.item_id} — ${item.state}`))
    card.appendChild(labelled('Target', item.target_text ?? item.target_post_id))
    if (item.reply_text) card.appendChild(labelled('Reply', item.reply_text))
    wrap.appendChild(card)
  }
  return wrap
}

function renderHistory(state: AppState): HTMLElement {
  const wrap = el('div', 'history')
  const histogram = rejectionHistogram(state)
  const table = el('table', 'histogram')
  table.dataset.testid = 'reason-histogram'
  const header = el('tr', '')
  header.appendChild(el('th', '', 'Rejection reason'))
  header.appendChild(el('th', '', 'Count'))
  table.appendChild(header)
  for (const code of REASON_CODES) {
    const row = el('tr', '')
    row.dataset.code = code
    row.appendChild(el('td', '', REASON_LABELS[code]))
    const count = el('td', '', String(histogram[code] ?? 0))
    count.dataset.testid = `count-${code}`
    row.appendChild(count)
    table.appendChild(row)
  }
  wrap.appendChild(table)
  wrap.appendChild(renderSimpleList(decidedItems(state), 'history-list', 'No decisions yet'))
  return wrap
}

function renderDashboard(
  state: AppState,
  dashboard: { rejections: RejectionStats | null; experiment: ExperimentStats | null },
): HTMLElement {
  const wrap = el('div', 'dashboard')
  const exp = dashboard.experiment
  if (exp) {
    const grid = el('dl', 'stats-grid')
    grid.dataset.testid = 'experiment-stats'
    for (const [label, value] of [
      ['Assignments', exp.assignments_total],
      ['Experimental arm', exp.experimental],
      ['Control arm', exp.control],
      ['Posted replies', exp.posted],
      ['Pending reviews', exp.pending_reviews],
      ['Snapshots due', exp.snapshots_due],
    ] as const) {
      grid.appendChild(el('dt', '', String(label)))
      grid.appendChild(el('dd', '', String(value)))
    }
    wrap.appendChild(grid)
  }
  const stats = dashboard.rejections
  if (stats) {
    const summary = el('p', 'server-histogram', `Server total rejected: ${stats.total_rejected}`)
    summary.dataset.testid = 'server-rejections'
    summary.dataset.byCode = JSON.stringify(stats.by_code)
    wrap.appendChild(summary)
  }
  return wrap
}

function renderConflict(state: AppState, callbacks: ViewCallbacks): HTMLElement {
  const overlay = el('div', 'conflict-overlay')
  const dialog = el('div', 'conflict-dialog')
  dialog.dataset.testid = 'conflict-dialog'
  dialog.appendChild(el('h2', '', 'Already decided'))
  dialog.appendChild(el('p', '', state.conflict?.detail ?? ''))
  const refreshed = state.conflict?.refreshed
  if (refreshed) {
    dialog.appendChild(
      labelled('Current state', `${refreshed.state}${refreshed.reviewer ? ` by ${refreshed.reviewer}` : ''}`),
    )
  }
  const dismiss = el('button', 'dismiss', 'OK') as HTMLButtonElement
  dismiss.dataset.testid = 'dismiss-conflict'
  dismiss.addEventListener('click', () => callbacks.onDismissConflict())
  dialog.appendChild(dismiss)
  overlay.appendChild(dialog)
  return overlay
}

function labelled(label: string, text: string): HTMLElement {
  const p = el('p', 'field')
  p.appendChild(el('strong', '', `${label}: `))
  p.appendChild(document.createTextNode(text))
  return p
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}
