import { ItemView } from '../src/types.js'

export function makeItem(overrides: Partial<ItemView> & { item_id: string }): ItemView {
  return {
    kind: 'experimental',
    state: 'pending',
    target_post_id: 't-' + overrides.item_id,
    target_text: 'zły tweet',
    reply_text: 'odpowiedź',
    cited_urls: [],
    retrieval_scores: [],
    enqueued_at: '2023-08-24T08:00:00+00:00',
    deadline: '2023-08-24T08:45:00+00:00',
    seconds_remaining: 2400,
    decided_at: null,
    reviewer: null,
    reason_code: null,
    reason_note: null,
    ...overrides,
  }
}

export async function waitFor<T>(
  probe: () => T | Promise<T>,
  predicate: (value: T) => boolean,
  { timeoutMs = 15_000, intervalMs = 100 } = {},
): Promise<T> {
  const deadline = Date.now() + timeoutMs
  let last: T
  for (;;) {
    last = await probe()
    if (predicate(last)) return last
    if (Date.now() > deadline) {
      throw new Error(`waitFor timed out; last value: ${JSON.stringify(last)}`)
    }
    await new Promise((resolve) => setTimeout(resolve, intervalMs))
  }
}
