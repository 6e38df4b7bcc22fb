import { ApiClient } from "./api.js";
import { QueueController } from "./controller.js";
import { makeKeyHandler } from "./keyboard.js";
import { ReviewView } from "./view.js";

const RETRY_INTERVAL_MS = 3000;

function reviewerName(): string {
  const stored = window.localStorage.getItem("reviewer");
  if (stored) return stored;
  const name = window.prompt("reviewer name?", "reviewer") || "reviewer";
  window.localStorage.setItem("reviewer", name);
  return name;
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const controller = new QueueController(new ApiClient(""), reviewerName());
const view = new ReviewView(root, controller);
const handler = makeKeyHandler(controller, () => {
  const note = view.note();
  view.clearNote();
  return note;
});

document.addEventListener("keydown", (event) => void handler(event));
window.setInterval(() => {
  if (controller.retryCount > 0) void controller.retryPending();
}, RETRY_INTERVAL_MS);

void controller.load();
