export { ApiClient, ApiError } from "./api.js";
export type { AnalyticsParams } from "./api.js";
export { FormViewModel } from "./formViewModel.js";
export { MemoryStorage, OfflineQueue } from "./offlineQueue.js";
export type { QueueStorage } from "./offlineQueue.js";
export { Replica, subjectKey } from "./replica.js";
export {
  ReviewQueueItem,
  buildReviewQueue,
  legalTransitions,
} from "./reviewQueue.js";
export {
  DashboardModel,
  readRenderedCells,
  renderGrid,
  renderTrend,
  selectionError,
  toQueryParams,
} from "./dashboard.js";
export { renderForm, renderReviewItem } from "./render.js";
export { TicketItem, renderTicket } from "./tickets.js";
export type { TicketPayload } from "./tickets.js";
export { checkCorrect, completenessRatio, parseCellValue } from "./validation.js";
export { decodeRecords, encodeRecords } from "./wire.js";
export * from "./types.js";
