import { resolveBaseUrl, TrackingClient } from "./api";
import { App, AppElements } from "./app";
import "./style.css";

function mustFind<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id}`);
  return node as T;
}

const els: AppElements = {
  root: mustFind<HTMLElement>("app"),
  form: mustFind<HTMLFormElement>("query-form"),
  input: mustFind<HTMLInputElement>("query-input"),
  submit: mustFind<HTMLButtonElement>("query-submit"),
};

const app = new App(new TrackingClient(resolveBaseUrl()), els);
void app.start();
