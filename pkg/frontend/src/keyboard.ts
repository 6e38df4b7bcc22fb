import type { Category } from "./types.js";
import type { QueueController } from "./controller.js";

const KEY_MAP: Record<string, Category> = {
  "1": "duplicate",
  "2": "gray-area",
  "3": "similar-but-different",
};

export function keyToCategory(key: string): Category | null {
  return KEY_MAP[key] ?? null;
}

/**
 * Returns the keydown handler: 1/2/3 decide the current pair. Keystrokes in
 * text inputs are left alone so notes can be typed.
 */
export function makeKeyHandler(
  controller: QueueController,
  getNote: () => string = () => "",
): (event: KeyboardEvent) => Promise<void> {
  return async (event: KeyboardEvent) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    const category = keyToCategory(event.key);
    if (!category) return;
    event.preventDefault();
    const note = getNote().trim();
    await controller.decide(category, note || undefined);
  };
}
