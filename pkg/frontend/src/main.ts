import { TrainerConsole } from "./console.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("service") ?? `${window.location.protocol}//${window.location.host}`;
const mode = params.get("mode") === "guided" ? "guided" : "free";

const container = document.getElementById("app");
if (container === null) {
  throw new Error("page has no #app element to mount into");
}

const trainer = new TrainerConsole({ baseUrl: base, mode, container });
trainer.start().catch((err) => {
  container.textContent = `Could not reach the session service at ${base}: ${err}`;
});
