import { mountApp } from "./app.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app mount point");
}
// Same-origin by default; override for a console served off-host.
const base = new URLSearchParams(window.location.search).get("api") ?? "";
mountApp(root, base);
