import { ServiceClient } from "./api.js";
import { ExplorerController } from "./controller.js";
import { HistoryView, renderAnswerCard, renderScenarioPanel, renderSketchList } from "./render.js";

function required(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

export async function boot(base = ""): Promise<ExplorerController> {
  const client = new ServiceClient(base);
  const listNode = required("sketch-list");
  const panelNode = required("scenario-panel");
  const answerNode = required("answer-card");
  const historyNode = required("history");
  const errorNode = required("error-bar");
  const historyView = new HistoryView(historyNode);

  const controller = new ExplorerController(client, {
    onMetaChanged: () =>
      renderScenarioPanel(panelNode, controller.state, {
        onToggle: (i) => void controller.toggle(i),
        onPhi: (phi) => void controller.setPhi(phi),
      }),
    onAnswer: (answer) => {
      errorNode.textContent = "";
      renderAnswerCard(answerNode, answer);
    },
    onHistoryChanged: () => historyView.render(controller.state.history),
    onError: (message) => {
      errorNode.textContent = message;
    },
  });

  renderSketchList(listNode, await client.listSketches(),
    (sketchId) => void controller.selectSketch(sketchId));
  renderScenarioPanel(panelNode, controller.state, {
    onToggle: (i) => void controller.toggle(i),
    onPhi: (phi) => void controller.setPhi(phi),
  });
  renderAnswerCard(answerNode, null);
  historyView.render(controller.state.history);
  return controller;
}

declare global {
  interface Window {
    provkitExplorer?: Promise<ExplorerController>;
  }
}

if (typeof document !== "undefined" && document.getElementById("sketch-list")) {
  window.provkitExplorer = boot();
}
