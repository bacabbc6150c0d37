import { ConsoleSession } from "./session.js";
import { mountConsole } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("bridge") ?? "ws://127.0.0.1:8700";

const session = new ConsoleSession(url, {
  factory: (target) => new WebSocket(target) as never,
});
session.connect();
mountConsole(document.getElementById("app") as HTMLElement, session);
