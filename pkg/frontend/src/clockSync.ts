/** Tracks the offset between server time and the local monotonic-ish clock.
 *
 *  Every SSE event and queue response carries the server's `now`; feeding
 *  those here keeps `now()` within one heartbeat (~1s) of the server, so
 *  displayed countdowns stay within the 2-second budget.
 */
export class ClockSync {
  private offsetMs = 0
  private synced = false

  update(serverNowIso: string, localNowMs: number = Date.now()): void {
    this.offsetMs = Date.parse(serverNowIso) - localNowMs
    this.synced = true
  }

  /** Server time in epoch milliseconds (local time until first sync). */
  now(localNowMs: number = Date.now()): number {
    return localNowMs + this.offsetMs
  }

  isSynced(): boolean {
    return this.synced
  }
}

/** Whole seconds left until `deadlineIso` on the synced clock, floored at 0. */
export function secondsRemaining(deadlineIso: string, clock: ClockSync, localNowMs?: number): number {
  const remaining = (Date.parse(deadlineIso) - clock.now(localNowMs)) / 1000
  return Math.max(0, remaining)
}

export function formatCountdown(seconds: number): string {
  const whole = Math.floor(seconds)
  const mm = Math.floor(whole / 60)
  const ss = whole % 60
  return `${String(mm).padStart(2, '0')}:${String(ss).padStart(2, '0')}`
}
