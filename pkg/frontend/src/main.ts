import { StageApi } from "./api.js";
import { App } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

const base = new URLSearchParams(location.search).get("api") ?? location.origin;
const api = new StageApi(base);
const app = new App(root, api);

const params = new URLSearchParams(location.search);
const bundle = params.get("bundle");
if (bundle) {
  void app.connect(bundle).catch((err) => {
    root.textContent = `failed to open session: ${err}`;
  });
} else {
  const picker = document.createElement("div");
  picker.className = "picker";
  const input = document.createElement("input");
  input.placeholder = "bundle name under the server's bundle root";
  const button = document.createElement("button");
  button.textContent = "Open session";
  button.addEventListener("click", () => {
    location.search = `?bundle=${encodeURIComponent(input.value)}`;
  });
  picker.append(input, button);
  document.body.prepend(picker);
}
