/** Browser shell: one navigation level per role — enter, review, explore. */

import { ApiClient, ApiError } from "./api.js";
import { DashboardModel, renderGrid, renderTrend, toQueryParams } from "./dashboard.js";
import { FormViewModel } from "./formViewModel.js";
import { OfflineQueue } from "./offlineQueue.js";
import { Replica } from "./replica.js";
import { buildReviewQueue } from "./reviewQueue.js";
import { renderForm, renderReviewItem } from "./render.js";
import { TicketItem, renderTicket } from "./tickets.js";
import type { DatasetMeta, ElementMeta, MetadataDoc } from "./types.js";

const root = document.getElementById("app")!;
const baseUrl = (window as { SPMDW_API?: string }).SPMDW_API ?? "";

let api = ApiClient.anonymous(baseUrl);
let metadata: MetadataDoc | null = null;
const replica = new Replica();

function clientId(): string {
  const key = "spmdw-client-id";
  let id = localStorage.getItem(key);
  if (!id) {
    id = `web-${Math.random().toString(36).slice(2, 10)}`;
    localStorage.setItem(key, id);
  }
  return id;
}

async function pull(): Promise<void> {
  const { changes, cursor } = await api.syncPull(replica.cursor);
  replica.applyPull(changes, cursor);
}

function elementsById(doc: MetadataDoc): Map<string, ElementMeta> {
  return new Map(doc.dataElements.map((e) => [e.id, e]));
}

async function showEntry(): Promise<void> {
  if (!metadata || !api.userId) return;
  const dataset = metadata.dataSets[0];
  const unit = metadata.orgUnits.find((u) => u.level === dataset?.entry_level);
  if (!dataset || !unit) {
    root.innerHTML = "<p>No entry form in scope.</p>";
    return;
  }
  const period = new Date().toISOString().slice(0, 7);
  const vm = new FormViewModel(dataset, elementsById(metadata), unit.id, period);
  const queue = new OfflineQueue(clientId(), api.userId, localStorage);

  const rerender = () => {
    root.innerHTML = renderForm(vm, queue.depth());
    root.querySelectorAll("input").forEach((input) => {
      input.addEventListener("input", () => {
        vm.setValue(input.name, input.value);
        rerender();
      });
    });
    root.querySelector("form")?.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void submit();
    });
  };

  const submit = async () => {
    try {
      const result = await api.submitDataValueSet(vm.payload());
      root.innerHTML =
        `<p class="toast">Stored, versions: ${JSON.stringify(result.versions)}</p>`;
    } catch (err) {
      if (err instanceof ApiError && err.code === "BLOCKED_BY_QUALITY") {
        vm.applyServerFindings(err.details.findings ?? []);
        rerender();
      } else if (err instanceof TypeError) {
        // offline: queue through the sync wire format and show the badge
        queue.enqueueSubmit(vm.payload(), replica, new Date().toISOString());
        rerender();
        window.addEventListener(
          "online",
          () => void queue.flush(api).then(rerender),
          { once: true },
        );
      } else {
        throw err;
      }
    }
  };
  rerender();
}

async function showReview(): Promise<void> {
  if (!api.role) return;
  await pull();
  const items = buildReviewQueue(replica, api.role);
  root.innerHTML = items.map(renderReviewItem).join("") || "<p>Queue is empty.</p>";
  root.querySelectorAll("article").forEach((node, i) => {
    const item = items[i]!;
    node.querySelectorAll("textarea").forEach((area) => {
      area.addEventListener("input", () => {
        item.setJustification(area.name.replace("justify-", ""), area.value);
        node.outerHTML = renderReviewItem(item);
        void showReview();
      });
    });
    node.querySelectorAll("button").forEach((button) => {
      button.addEventListener("click", async () => {
        await api.review(item.reviewBody(button.name as never));
        await showReview();
      });
    });
  });
}

async function showTickets(): Promise<void> {
  if (!api.role) return;
  const { tickets } = await api.syncTickets();
  const items = tickets.map((t) => new TicketItem(t, api.role!));
  root.innerHTML = items.map(renderTicket).join("") || "<p>No conflict tickets.</p>";
  root.querySelectorAll("article.ticket").forEach((node, i) => {
    const item = items[i]!;
    node.querySelectorAll("button").forEach((button) => {
      button.addEventListener("click", async () => {
        await api.syncResolve(item.resolveBody(button.name as never));
        await showTickets();
      });
    });
  });
}

async function showDashboard(): Promise<void> {
  const doc = metadata;
  const indicator = doc?.indicators[0]?.id ?? "ind-01-anc";
  const cities = doc
    ? doc.orgUnits.filter((u) => u.level === 2).map((u) => u.id)
    : [];
  const months = ["2021-01", "2021-02", "2021-03"];
  const payload = await api.analytics(
    toQueryParams({
      rows: "ORG_UNIT",
      columns: "PERIOD",
      rowMembers: cities,
      columnMembers: months,
      filters: { indicator },
    }),
  );
  const model = new DashboardModel(payload);
  const firstRow = payload.row_keys[0];
  root.innerHTML =
    renderGrid(model) +
    (firstRow ? renderTrend(model.trend(firstRow)) : "") +
    `<a download="analytics.csv" href="${baseUrl}/analytics?format=csv">Export</a>`;
}

async function boot(): Promise<void> {
  const form = document.getElementById("login") as HTMLFormElement | null;
  form?.addEventListener("submit", async (ev) => {
    ev.preventDefault();
    const data = new FormData(form);
    api = await ApiClient.login(
      baseUrl,
      String(data.get("user")),
      String(data.get("password")),
    );
    metadata = await api.metadata();
    document.querySelectorAll("nav button").forEach((b) => {
      b.removeAttribute("disabled");
    });
  });
  document.getElementById("nav-enter")?.addEventListener("click", () => void showEntry());
  document.getElementById("nav-review")?.addEventListener("click", () => void showReview());
  document
    .getElementById("nav-tickets")
    ?.addEventListener("click", () => void showTickets());
  document
    .getElementById("nav-explore")
    ?.addEventListener("click", () => void showDashboard());
  // anonymous visitors can explore PUBLISHED indicators right away
  void showDashboard().catch(() => {
    root.innerHTML = "<p>Sign in to begin.</p>";
  });
}

void boot();
