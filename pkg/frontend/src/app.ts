/**
 * DOM wiring: renders the session state into a thumbnail grid, forwards
 * clicks/keystrokes to the controller, and reports render-complete once
 * every visible thumbnail has been drawn.
 */

import { ApiClient } from "./api.js";
import { renderOverlayThumbnail } from "./overlay.js";
import { SessionController, ViewState } from "./session.js";

const api = new ApiClient("");
let controller: SessionController | null = null;
let renderSeq = 0;
let paintedKey = "";

const el = {
  annotator: document.getElementById("annotator") as HTMLInputElement,
  start: document.getElementById("start") as HTMLButtonElement,
  status: document.getElementById("status") as HTMLElement,
  banner: document.getElementById("banner") as HTMLElement,
  retry: document.getElementById("retry") as HTMLButtonElement,
  grid: document.getElementById("grid") as HTMLElement,
  pager: document.getElementById("pager") as HTMLElement,
  prev: document.getElementById("prev") as HTMLButtonElement,
  next: document.getElementById("next") as HTMLButtonElement,
  pageLabel: document.getElementById("page-label") as HTMLElement,
  exportLink: document.getElementById("export") as HTMLAnchorElement,
};

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = api.url(url);
  });
}

async function paintGrid(state: ViewState): Promise<void> {
  const detail = state.detail;
  if (!detail || !controller) {
    el.grid.replaceChildren();
    return;
  }
  const seq = ++renderSeq;
  const start = state.page * state.pageSize;
  const urls = detail.candidates.slice(start, start + state.pageSize);
  const [image, ...masks] = await Promise.all([
    loadImage(detail.image_url),
    ...urls.map(loadImage),
  ]);
  if (seq !== renderSeq) {
    return; // a newer image/page superseded this paint
  }
  const cells = masks.map((mask, slot) => {
    const index = start + slot;
    const cell = document.createElement("figure");
    cell.className = "thumb";
    const canvas = renderOverlayThumbnail(image, mask);
    canvas.title = `candidate ${index}`;
    cell.appendChild(canvas);
    const caption = document.createElement("figcaption");
    caption.textContent = slot + 1 <= 9 ? `[${slot + 1}] #${index}` : `#${index}`;
    cell.appendChild(caption);
    cell.addEventListener("click", () => void controller?.select(index));
    return cell;
  });
  const none = document.createElement("figure");
  none.className = "thumb none";
  none.innerHTML = "<div class='none-box'>none<br>acceptable</div><figcaption>[0]</figcaption>";
  none.addEventListener("click", () => void controller?.select(-1));
  el.grid.replaceChildren(...cells, none);
  controller.markRendered();
}

function render(state: ViewState): void {
  switch (state.phase) {
    case "idle":
      el.status.textContent = "enter your annotator id and press start";
      break;
    case "loading":
      el.status.textContent = "loading…";
      break;
    case "rendering":
    case "ready":
    case "submitting":
      el.status.textContent =
        `${state.pendingCount} image${state.pendingCount === 1 ? "" : "s"} pending — ` +
        `reviewing ${state.imageId}`;
      break;
    case "done":
      el.status.textContent = "all done — every pending image has been reviewed";
      el.grid.replaceChildren();
      break;
    case "error":
      el.status.textContent = "";
      break;
  }

  el.banner.textContent = state.errorMessage ?? "";
  el.banner.hidden = !state.errorMessage;
  el.retry.hidden = state.phase !== "error";

  const pages = controller?.pageCount() ?? 1;
  el.pager.hidden = pages <= 1;
  el.pageLabel.textContent = `page ${state.page + 1}/${pages}`;
  el.prev.disabled = state.page === 0;
  el.next.disabled = state.page >= pages - 1;

  // Repaint when the image or page changes; markRendered() is a no-op on
  // page flips because the controller only arms selection once per image.
  if (state.phase === "rendering" || state.phase === "ready") {
    const key = `${state.imageId}:${state.page}`;
    if (key !== paintedKey) {
      paintedKey = key;
      void paintGrid(state);
    }
  } else if (state.phase === "done" || state.phase === "idle" || state.phase === "error") {
    paintedKey = "";
  }
}

function start(): void {
  const annotator = el.annotator.value.trim();
  if (!annotator) {
    el.annotator.focus();
    return;
  }
  localStorage.setItem("checkmask.annotator", annotator);
  controller = new SessionController(api, { annotator, onChange: render });
  void controller.start();
}

el.annotator.value = localStorage.getItem("checkmask.annotator") ?? "";
el.start.addEventListener("click", start);
el.retry.addEventListener("click", () => void controller?.retry());
el.prev.addEventListener("click", () => controller?.turnPage(-1));
el.next.addEventListener("click", () => controller?.turnPage(1));
el.exportLink.href = api.exportUrl();
document.addEventListener("keydown", (ev) => {
  if (ev.target instanceof HTMLInputElement) {
    return;
  }
  controller?.handleKey(ev.key);
});
