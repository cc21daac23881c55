import { describe, expect, it } from 'vitest'

import { parseSseChunk } from '../src/sse.js'

describe('sse frame parsing', () => {
  it('parses complete frames and keeps the partial tail', () => {
    const chunk =
      'event: hello\ndata: {"now":"t0"}\n\n' +
      'event: decided\ndata: {"item_id":"a","state":"approved","now":"t1"}\n\n' +
      'event: heartbeat\ndata: {"now":'
    const { events, rest } = parseSseChunk(chunk)
    expect(events).toEqual([
      { type: 'hello', data: '{"now":"t0"}' },
      { type: 'decided', data: '{"item_id":"a","state":"approved","now":"t1"}' },
    ])
    expect(rest).toBe('event: heartbeat\ndata: {"now":')
  })

  it('joins partial frames across chunks', () => {
    const first = parseSseChunk('event: heartbeat\ndata: {"no')
    expect(first.events).toEqual([])
    const second = parseSseChunk(first.rest + 'w":"t2"}\n\n')
    expect(second.events).toEqual([{ type: 'heartbeat', data: '{"now":"t2"}' }])
    expect(second.rest).toBe('')
  })

  it('defaults the event type to message', () => {
    const { events } = parseSseChunk('data: {"x":1}\n\n')
    expect(events).toEqual([{ type: 'message', data: '{"x":1}' }])
  })
})
