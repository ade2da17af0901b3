import { ApiClient } from "./api.js";
import { ActionQueue, FeedLoader, tagCount } from "./state.js";
import { tileAccent, tileBackground, tileLabel } from "./tiles.js";
import type { FeedCard } from "./types.js";

/**
 * Single-page feed client. All state derives from service responses: the
 * client renders what the engine returns and never re-ranks.
 */

const api = new ApiClient(window.location.origin);
const queue = new ActionQueue();

let userId = "probe";
const loader = new FeedLoader(async () => (await api.feed(userId, 10)).results);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function tileStrip(card: FeedCard): HTMLElement {
  const strip = el("div", "tiles");
  for (const item of card.items) {
    const tile = el("div", "tile", tileLabel(item));
    tile.style.background = tileBackground(item);
    tile.style.borderColor = tileAccent(item);
    strip.appendChild(tile);
  }
  return strip;
}

function moveBadge(ootdId: string): HTMLElement {
  const move = loader.moves.find((m) => m.ootd_id === ootdId);
  if (!move || move.kind === "same") return el("span", "move");
  if (move.kind === "new") return el("span", "move new", "new");
  const arrow = move.kind === "up" ? `▲${move.delta}` : `▼${-move.delta}`;
  return el("span", `move ${move.kind}`, arrow);
}

async function act(kind: "view" | "like" | "follow", targetId: string): Promise<void> {
  await queue.enqueue(() => api.interact(userId, kind, targetId));
  await renderFeed();
  await renderLeaders();
}

async function renderFeed(): Promise<void> {
  const cards = await loader.refresh();
  const list = document.getElementById("feed")!;
  list.replaceChildren();
  for (const card of cards) {
    const row = el("article", "card");
    const head = el("header");
    head.appendChild(el("span", `badge ${card.source}`, card.source));
    head.appendChild(el("strong", "", card.ootd_id));
    head.appendChild(el("span", "uploader", `by ${card.uploader_id}`));
    head.appendChild(moveBadge(card.ootd_id));
    row.appendChild(head);
    row.appendChild(tileStrip(card));
    row.appendChild(el("div", "tags", card.hashtags.map((t) => `#${t}`).join(" ")));
    const actions = el("div", "actions");
    const like = el("button", "", "like");
    like.onclick = () => void act("like", card.ootd_id);
    const view = el("button", "", "open");
    view.onclick = () => {
      void act("view", card.ootd_id);
      void renderDetail(card.ootd_id);
    };
    actions.append(like, view);
    row.appendChild(actions);
    list.appendChild(row);
  }
  const denim = tagCount(cards, "denim", 10);
  document.getElementById("stats")!.textContent =
    `top-10 denim cards: ${denim} | pending actions: ${queue.pending}`;
}

async function renderDetail(ootdId: string): Promise<void> {
  const pane = document.getElementById("detail")!;
  pane.replaceChildren(el("h2", "", `OOTD ${ootdId}`));
  const detail = await api.ootdDetail(ootdId);
  pane.appendChild(tileStrip(detail.ootd));
  pane.appendChild(el("div", "tags", detail.ootd.hashtags.map((t) => `#${t}`).join(" ")));

  pane.appendChild(el("h3", "", "similar products"));
  for (const [itemId, hits] of Object.entries(detail.similar_products)) {
    const row = el("div", "similar-row", `item ${itemId}: `);
    for (const hit of hits) {
      const chip = el(
        "span",
        "chip",
        `${hit.sub_category} #${hit.item_id} (${hit.score.toFixed(3)})`,
      );
      chip.style.background = tileBackground({
        item_id: hit.item_id,
        sub_category: hit.sub_category,
        color_tag: hit.color_tag,
      });
      row.appendChild(chip);
    }
    pane.appendChild(row);
  }

  pane.appendChild(el("h3", "", "similar-style OOTDs"));
  const similar = await api.similarOotds(ootdId, 5);
  for (const card of similar.results) {
    const row = el("div", "similar-row", `${card.ootd_id} (${card.score.toFixed(3)}) `);
    row.appendChild(tileStrip(card));
    pane.appendChild(row);
  }
}

async function renderLeaders(): Promise<void> {
  const box = document.getElementById("leaders")!;
  box.replaceChildren(el("h3", "", "style leaders"));
  const leaders = await api.leaders(userId, 5);
  for (const entry of leaders.results) {
    const row = el("div", "leader");
    row.appendChild(el("span", `badge ${entry.source}`, entry.source));
    row.appendChild(el("span", "", entry.user_id));
    const follow = el("button", "", "follow");
    follow.onclick = () => void act("follow", entry.user_id);
    row.appendChild(follow);
    box.appendChild(row);
  }
}

async function boot(): Promise<void> {
  const picker = document.getElementById("user") as HTMLInputElement;
  picker.value = userId;
  picker.onchange = () => {
    userId = picker.value.trim();
    void renderFeed().then(renderLeaders);
  };
  document.getElementById("refresh")!.onclick = () => void renderFeed();
  await renderFeed();
  await renderLeaders();
}

void boot();
