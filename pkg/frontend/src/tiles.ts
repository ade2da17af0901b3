import type { CardItem } from "./types.js";

/** Colored placeholder tiles keyed by sub-category; no real photos. */

const NAMED_COLORS: Record<string, string> = {
  black: "#1e1e1e",
  white: "#ebebeb",
  red: "#c82828",
  blue: "#2846be",
  navy: "#19235a",
  green: "#289646",
  beige: "#cdb996",
  gray: "#808080",
  brown: "#785032",
  pink: "#e682aa",
};

function crc(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h;
}

/** Deterministic hue per sub-category for the tile border/label. */
export function subCategoryHue(subCategory: string): number {
  return crc(subCategory) % 360;
}

export function tileBackground(item: CardItem): string {
  const named = item.color_tag ? NAMED_COLORS[item.color_tag] : undefined;
  if (named) {
    return named;
  }
  return `hsl(${subCategoryHue(item.sub_category)}, 45%, 62%)`;
}

export function tileAccent(item: CardItem): string {
  return `hsl(${subCategoryHue(item.sub_category)}, 70%, 38%)`;
}

export function tileLabel(item: CardItem): string {
  return item.color_tag ? `${item.color_tag} ${item.sub_category}` : item.sub_category;
}
