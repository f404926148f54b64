/** HTML renderers for the entry form and review queue. String-based so the
 * same output is testable in node and mountable in the browser shell.
 */

import type { FormViewModel } from "./formViewModel.js";
import type { ReviewQueueItem } from "./reviewQueue.js";

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderForm(vm: FormViewModel, queueDepth = 0): string {
  const rows = [...vm.cells.values()]
    .map((cell) => {
      const error = cell.error ?? cell.serverError;
      return (
        `<div class="cell" data-element="${esc(cell.elementId)}">` +
        `<label>${esc(cell.label)}</label>` +
        `<input name="${esc(cell.elementId)}" value="${esc(cell.raw)}"` +
        `${error ? ' aria-invalid="true"' : ""}/>` +
        (error ? `<span class="error">${esc(error)}</span>` : "") +
        (cell.flag ? `<span class="flag">${esc(cell.flag)}</span>` : "") +
        `</div>`
      );
    })
    .join("");
  const meter = vm.completeness();
  return (
    `<form data-dataset="${esc(vm.dataset.id)}" data-org="${esc(vm.orgUnitId)}"` +
    ` data-period="${esc(vm.period)}">` +
    rows +
    `<progress class="completeness" max="1" value="${meter}"></progress>` +
    `<button type="submit"${vm.submitEnabled() ? "" : " disabled"}>Submit</button>` +
    (queueDepth > 0
      ? `<span class="queue-badge">${queueDepth} queued offline</span>`
      : "") +
    `</form>`
  );
}

export function renderReviewItem(item: ReviewQueueItem): string {
  const subj = item.subject;
  const flags = item.deviations
    .map(
      (d) =>
        `<div class="deviation" data-element="${esc(d.elementId)}">` +
        `<span>${esc(d.elementId)} = ${d.value}</span>` +
        `<textarea name="justify-${esc(d.elementId)}"` +
        ` placeholder="justification required">${esc(d.justification)}</textarea>` +
        `</div>`,
    )
    .join("");
  const buttons = item
    .actions()
    .map(
      (a) =>
        `<button name="${a.action}"${a.enabled ? "" : " disabled"}` +
        `${a.hint ? ` title="${esc(a.hint)}"` : ""}>${a.action}</button>`,
    )
    .join("");
  return (
    `<article class="review-item" data-status="${item.status}"` +
    ` data-subject="${esc(`${subj.dataset}|${subj.org_unit}|${subj.period}`)}">` +
    `<header>${esc(subj.dataset)} / ${esc(subj.org_unit)} / ${esc(subj.period)}` +
    ` — ${item.status}</header>` +
    flags +
    `<footer>${buttons}</footer></article>`
  );
}
