import { MaodApi } from "./api.js";
import { Workspace } from "./app.js";

const root = document.getElementById("app");
if (root instanceof HTMLElement) {
  const base = (window as { MAOD_API_BASE?: string }).MAOD_API_BASE ?? "";
  new Workspace(root, new MaodApi(base));
}
