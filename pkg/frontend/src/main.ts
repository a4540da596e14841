import { ReviewApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
void new ReviewApp(root).start();
