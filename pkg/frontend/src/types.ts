import { z } from 'zod'

/** The six rejection reasons the backend accepts. The decision payload type
 *  below is keyed to this tuple, so a payload with any other code is a
 *  compile error, and the zod schema rejects it again at runtime. */
export const REASON_CODES = [
  'not_harmful_false_positive',
  'low_quality',
  'off_topic',
  'hallucination',
  'article_mismatch',
  'controversial',
] as const

export type ReasonCode = (typeof REASON_CODES)[number]

export const REASON_LABELS: Record<ReasonCode, string> = {
  not_harmful_false_positive: 'Not harmful (false positive)',
  low_quality: 'Low-quality response',
  off_topic: 'Off-topic answer',
  hallucination: 'False or unverified information',
  article_mismatch: 'Article does not support the response',
  controversial: 'Controversial response',
}

export type ItemState = 'pending' | 'approved' | 'rejected' | 'expired'

export const itemViewSchema = z.object({
  item_id: z.string(),
  kind: z.enum(['experimental', 'control']),
  state: z.enum(['pending', 'approved', 'rejected', 'expired']),
  target_post_id: z.string(),
  target_text: z.string().nullable(),
  reply_text: z.string().nullable(),
  cited_urls: z.array(z.string()),
  retrieval_scores: z.array(z.tuple([z.string(), z.number()])),
  enqueued_at: z.string(),
  deadline: z.string(),
  seconds_remaining: z.number(),
  decided_at: z.string().nullable(),
  reviewer: z.string().nullable(),
  reason_code: z.string().nullable(),
  reason_note: z.string().nullable(),
})

export type ItemView = z.infer<typeof itemViewSchema>

export const queueResponseSchema = z.object({
  now: z.string(),
  items: z.array(itemViewSchema),
})

export type QueueResponse = z.infer<typeof queueResponseSchema>

export const rejectionStatsSchema = z.object({
  total_rejected: z.number(),
  by_code: z.record(z.number()),
})

export type RejectionStats = z.infer<typeof rejectionStatsSchema>

export const experimentStatsSchema = z.object({
  now: z.string(),
  assignments_total: z.number(),
  experimental: z.number(),
  control: z.number(),
  posted: z.number(),
  pending_reviews: z.number(),
  snapshots_due: z.number(),
})

export type ExperimentStats = z.infer<typeof experimentStatsSchema>

export type DecisionPayload =
  | { decision: 'approve'; reviewer: string }
  | { decision: 'reject'; reason_code: ReasonCode; note?: string; reviewer: string }

export const decisionPayloadSchema = z.union([
  z.object({ decision: z.literal('approve'), reviewer: z.string().min(1) }),
  z.object({
    decision: z.literal('reject'),
    reason_code: z.enum(REASON_CODES),
    note: z.string().optional(),
    reviewer: z.string().min(1),
  }),
])

/** A server event from the queue SSE stream; every event carries the
 *  server's current time so clients can sync countdowns. */
export interface QueueEvent {
  type: 'hello' | 'heartbeat' | 'enqueued' | 'decided' | 'expired' | 'posted'
  now: string
  item_id?: string
  state?: ItemState
}
