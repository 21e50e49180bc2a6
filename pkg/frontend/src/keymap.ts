/**
 * Keyboard contract: digits 1..9 pick the Nth thumbnail on the current
 * page, 0 submits "none acceptable", brackets/arrows turn pages.
 */

export type KeyAction =
  | { kind: "select"; index: number }
  | { kind: "none" }
  | { kind: "page"; delta: 1 | -1 }
  | null;

/**
 * Map a KeyboardEvent.key to an action given the current page window.
 *
 * `pageStart` is the global index of the first visible thumbnail and
 * `visibleCount` how many are on screen; digits beyond the visible range
 * are inert rather than wrapping.
 */
export function keyToAction(key: string, pageStart: number, visibleCount: number): KeyAction {
  if (key === "0") {
    return { kind: "none" };
  }
  if (key.length === 1 && key >= "1" && key <= "9") {
    const slot = key.charCodeAt(0) - "1".charCodeAt(0);
    if (slot < visibleCount) {
      return { kind: "select", index: pageStart + slot };
    }
    return null;
  }
  if (key === "ArrowRight" || key === "]") {
    return { kind: "page", delta: 1 };
  }
  if (key === "ArrowLeft" || key === "[") {
    return { kind: "page", delta: -1 };
  }
  return null;
}
