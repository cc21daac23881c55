import { beforeEach, describe, expect, it, vi } from 'vitest'

import { ClockSync } from '../src/clockSync.js'
import { applyItems, initialState, setConnected, setTab } from '../src/state.js'
import { render, ViewCallbacks } from '../src/view.js'
import { makeItem } from './helpers.js'

function noopCallbacks(overrides: Partial<ViewCallbacks> = {}): ViewCallbacks {
  return {
    onApprove: () => {},
    onReject: () => {},
    onTab: () => {},
    onDismissConflict: () => {},
    ...overrides,
  }
}

describe('view rendering', () => {
  let root: HTMLElement
  let clock: ClockSync

  beforeEach(() => {
    document.body.innerHTML = ''
    root = document.createElement('div')
    document.body.appendChild(root)
    clock = new ClockSync()
    clock.update('2023-08-24T08:05:00+00:00')
  })

  it('shows the empty-state panel when nothing is pending', () => {
    const state = setConnected(initialState(), true)
    render(root, state, clock, noopCallbacks(), { rejections: null, experiment: null })
    expect(root.querySelector('[data-testid="empty-state"]')).not.toBeNull()
    expect(root.querySelector('[data-testid="disconnected-banner"]')).toBeNull()
  })

  it('shows the disconnected banner until the stream is up', () => {
    render(root, initialState(), clock, noopCallbacks(), { rejections: null, experiment: null })
    expect(root.querySelector('[data-testid="disconnected-banner"]')).not.toBeNull()
  })

  it('renders pending cards with countdowns and wires the approve button', () => {
    const approved: string[] = []
    const state = setConnected(
      applyItems(initialState(), [makeItem({ item_id: 'a' })]),
      true,
    )
    render(root, state, clock, noopCallbacks({ onApprove: (id) => approved.push(id) }), {
      rejections: null,
      experiment: null,
    })
    expect(root.querySelector('[data-testid="countdown"]')?.textContent).toMatch(/^\d{2}:\d{2}$/)
    root.querySelector<HTMLButtonElement>('[data-testid="approve"]')!.click()
    expect(approved).toEqual(['a'])
  })

  it('refuses to reject without a selected taxonomy code', () => {
    const rejected: string[] = []
    const state = setConnected(
      applyItems(initialState(), [makeItem({ item_id: 'a' })]),
      true,
    )
    render(root, state, clock, noopCallbacks({ onReject: (id) => rejected.push(id) }), {
      rejections: null,
      experiment: null,
    })
    root.querySelector<HTMLButtonElement>('[data-testid="reject"]')!.click()
    expect(rejected).toEqual([])
    expect(root.querySelector('.reason-select.invalid')).not.toBeNull()
  })

  it('control cards only offer the false-positive rejection reason', () => {
    const state = setConnected(
      applyItems(initialState(), [makeItem({ item_id: 'c', kind: 'control', reply_text: null })]),
      true,
    )
    render(root, state, clock, noopCallbacks(), { rejections: null, experiment: null })
    const options = [...root.querySelectorAll<HTMLOptionElement>('[data-testid="reason-select"] option')]
    const values = options.map((o) => o.value).filter(Boolean)
    expect(values).toEqual(['not_harmful_false_positive'])
  })

  it('renders all six taxonomy rows in the histogram', () => {
    let state = applyItems(initialState(), [
      makeItem({ item_id: 'r', state: 'rejected', reason_code: 'off_topic' }),
    ])
    state = setTab(setConnected(state, true), 'history')
    render(root, state, clock, noopCallbacks(), { rejections: null, experiment: null })
    const rows = root.querySelectorAll('[data-testid="reason-histogram"] tr[data-code]')
    expect(rows.length).toBe(6)
    expect(root.querySelector('[data-testid="count-off_topic"]')?.textContent).toBe('1')
    expect(root.querySelector('[data-testid="count-hallucination"]')?.textContent).toBe('0')
  })
})
