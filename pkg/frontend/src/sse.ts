import { QueueEvent } from './types.js'

/** Fetch-streaming SSE client.
 *
 *  Uses fetch + ReadableStream instead of EventSource so the same code runs
 *  in the browser and under Node-based tests, and so auth headers can ride
 *  along. Reconnects with a flat delay; connection state changes feed the
 *  UI's disconnected banner.
 */
export interface SseHandlers {
  onEvent: (event: QueueEvent) => void
  onConnected?: () => void
  onDisconnected?: () => void
}

export interface SseOptions {
  token?: string
  fetchImpl?: typeof fetch
  reconnectDelayMs?: number
}

export function parseSseChunk(buffer: string): { events: { type: string; data: string }[]; rest: string } {
  const events: { type: string; data: string }[] = []
  const blocks = buffer.split('\n\n')
  const rest = blocks.pop() ?? ''
  for (const block of blocks) {
    let type = 'message'
    let data = ''
    for (const line of block.split('\n')) {
      if (line.startsWith('event:')) type = line.slice(6).trim()
      else if (line.startsWith('data:')) data += line.slice(5).trim()
    }
    if (data) events.push({ type, data })
  }
  return { events, rest }
}

export function subscribeQueueEvents(baseUrl: string, handlers: SseHandlers, options: SseOptions = {}): () => void {
  const fetchImpl = options.fetchImpl ?? fetch
  const delay = options.reconnectDelayMs ?? 2000
  const controller = new AbortController()
  let active = true

  async function connect(): Promise<void> {
    while (active) {
      try {
        const headers: Record<string, string> = { Accept: 'text/event-stream' }
        if (options.token) headers['Authorization'] = `Bearer ${options.token}`
        const response = await fetchImpl(`${baseUrl}/queue/events`, {
          headers,
          signal: controller.signal,
        })
        if (!response.ok || !response.body) {
          handlers.onDisconnected?.()
          await sleep(delay)
          continue
        }
        handlers.onConnected?.()
        const reader = response.body.getReader()
        const decoder = new TextDecoder()
        let buffer = ''
        for (;;) {
          const { done, value } = await reader.read()
          if (done) break
          buffer += decoder.decode(value, { stream: true })
          const { events, rest } = parseSseChunk(buffer)
          buffer = rest
          for (const raw of events) {
            try {
              const payload = JSON.parse(raw.data) as Record<string, unknown>
              handlers.onEvent({ ...(payload as object), type: raw.type } as QueueEvent)
            } catch {
              // malformed frame: skip, the next heartbeat restores sync
            }
          }
        }
        handlers.onDisconnected?.()
      } catch {
        if (!active) return
        handlers.onDisconnected?.()
      }
      if (active) await sleep(delay)
    }
  }

  void connect()
  return () => {
    active = false
    controller.abort()
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms))
}
