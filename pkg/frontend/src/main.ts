/** Browser entry point: mount the console and try the default service. */

import { mountConsole } from "./app.js";

const host = document.getElementById("app");
if (host) {
  const params = new URLSearchParams(location.search);
  const url = params.get("service") ?? "http://127.0.0.1:8040";
  const app = mountConsole(host, url);
  void app.connect();
}
