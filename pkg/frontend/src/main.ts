/**
 * Canvas UI bootstrap: binds AnnotatorApp to the DOM.
 *
 * Layers: the frame <img> at the bottom, one offscreen raster per object
 * composited onto the overlay canvas, click markers on top (crosshair for
 * positive, bar for negative). All mask pixels come from the server; the
 * canvas never edits them.
 */

import { ApiClient } from "./api.js";
import { compositeOverlays, rasterizeOverlay } from "./overlay.js";
import { AnnotatorApp } from "./state.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function drawMarkers(ctx: CanvasRenderingContext2D, app: AnnotatorApp): void {
  for (const marker of app.markers) {
    if (marker.frame !== app.currentFrame) continue;
    ctx.lineWidth = 1.5;
    ctx.strokeStyle = marker.polarity === "positive" ? "#2ec4b6" : "#e63946";
    ctx.beginPath();
    if (marker.polarity === "positive") {
      ctx.moveTo(marker.x - 4, marker.y);
      ctx.lineTo(marker.x + 4, marker.y);
      ctx.moveTo(marker.x, marker.y - 4);
      ctx.lineTo(marker.x, marker.y + 4);
    } else {
      ctx.moveTo(marker.x - 4, marker.y);
      ctx.lineTo(marker.x + 4, marker.y);
    }
    ctx.stroke();
  }
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("api") ?? "http://127.0.0.1:8765";
  const api = new ApiClient(baseUrl);

  const frameImg = $<HTMLImageElement>("frame");
  const overlayCanvas = $<HTMLCanvasElement>("overlay");
  const scrubber = $<HTMLInputElement>("scrubber");
  const frameLabel = $<HTMLSpanElement>("frame-label");
  const objectList = $<HTMLUListElement>("objects");
  const progress = $<HTMLProgressElement>("progress");
  const propagateButton = $<HTMLButtonElement>("propagate");
  const exportButton = $<HTMLButtonElement>("export");
  const noticeBox = $<HTMLDivElement>("notices");

  const notify = (message: string) => {
    noticeBox.textContent = message;
    noticeBox.classList.add("visible");
    setTimeout(() => noticeBox.classList.remove("visible"), 4000);
  };

  const app = new AnnotatorApp(api, { onChange: render, onNotice: notify });

  function render(): void {
    const session = app.session;
    if (!session) return;
    const [width, height] = session.resolution;
    overlayCanvas.width = width;
    overlayCanvas.height = height;
    frameImg.src = api.frameUrl(session.session_id, app.currentFrame) + `?rev=${app.revision}`;
    scrubber.max = String(session.frame_count - 1);
    scrubber.value = String(app.currentFrame);
    frameLabel.textContent = `frame ${app.currentFrame + 1}/${session.frame_count}`;

    const ctx = overlayCanvas.getContext("2d")!;
    ctx.clearRect(0, 0, width, height);
    const rasters = app
      .visibleOverlays()
      .map((o) => rasterizeOverlay(o.mask, o.color, 0.45));
    if (rasters.length > 0) {
      const combined = compositeOverlays(rasters, width, height);
      const imageData = ctx.createImageData(width, height);
      imageData.data.set(combined.data);
      ctx.putImageData(imageData, 0, 0);
    }
    drawMarkers(ctx, app);

    objectList.innerHTML = "";
    for (const obj of session.objects) {
      const item = document.createElement("li");
      const swatch = `rgb(${obj.color.join(",")})`;
      item.innerHTML =
        `<input type="checkbox" checked data-oid="${obj.object_id}">` +
        `<span class="swatch" style="background:${swatch}"></span>` +
        `${obj.object_id}: ${obj.class_name} <em>${obj.status}</em>`;
      if (obj.object_id === app.selectedObject) item.classList.add("selected");
      item.addEventListener("click", () => app.selectObject(obj.object_id));
      item.querySelector("input")!.addEventListener("click", (event) => {
        event.stopPropagation();
        app.toggleObjectVisibility(obj.object_id);
      });
      objectList.appendChild(item);
    }

    const job = app.job;
    propagateButton.disabled = app.isBusy();
    propagateButton.title = app.isBusy() ? "Propagation already running" : "";
    if (job) {
      progress.max = Math.max(job.progress.total, 1);
      progress.value = job.progress.done;
    }
  }

  overlayCanvas.addEventListener("click", (event) => {
    const rect = overlayCanvas.getBoundingClientRect();
    const x = Math.floor(((event.clientX - rect.left) / rect.width) * overlayCanvas.width);
    const y = Math.floor(((event.clientY - rect.top) / rect.height) * overlayCanvas.height);
    void app.canvasClick(x, y);
  });

  $<HTMLButtonElement>("mode-positive").addEventListener("click", () => app.setPointMode("positive"));
  $<HTMLButtonElement>("mode-negative").addEventListener("click", () => app.setPointMode("negative"));
  $<HTMLButtonElement>("new-object").addEventListener("click", () => {
    const classId = Number(prompt("class id?", "1"));
    if (!Number.isFinite(classId) || classId < 1) return;
    const className = prompt("class name (blank = from table)?", "") ?? "";
    void app.createObject(classId, className);
  });
  $<HTMLButtonElement>("reannotate").addEventListener("click", () => {
    if (app.selectedObject !== null) void app.reannotate(app.selectedObject);
  });
  $<HTMLButtonElement>("restart").addEventListener("click", () => void app.restart());
  propagateButton.addEventListener("click", () => void app.startPropagation());
  exportButton.addEventListener("click", () => void app.exportMasks(undefined, true));
  scrubber.addEventListener("input", () => void app.selectFrame(Number(scrubber.value)));

  const videoId = params.get("video") ?? prompt("video id?") ?? "";
  await app.open(videoId);
}

boot().catch((error) => {
  document.body.insertAdjacentHTML("beforeend", `<pre class="boot-error">${error}</pre>`);
});
