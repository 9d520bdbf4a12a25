import { AnnotationApi } from "./api.js";
import { AnnotationApp } from "./app.js";

const ANNOTATOR_KEY = "stancelab.annotator";

function resolveAnnotator(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("annotator");
  if (fromQuery) {
    window.localStorage.setItem(ANNOTATOR_KEY, fromQuery);
    return fromQuery;
  }
  const stored = window.localStorage.getItem(ANNOTATOR_KEY);
  if (stored) return stored;
  const entered = window.prompt("Annotator id:")?.trim() || "anonymous";
  window.localStorage.setItem(ANNOTATOR_KEY, entered);
  return entered;
}

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
const app = new AnnotationApp(root, new AnnotationApi(""), resolveAnnotator());
void app.start();
