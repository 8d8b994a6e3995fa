export type ShortcutAction =
  | 'finish'
  | 'undo'
  | 'toggle-difficult'
  | 'save'
  | 'discard'
  | 'zoom-in'
  | 'zoom-out'
  | 'zoom-fit';

/** The subset of KeyboardEvent the dispatcher needs (DOM-free for tests). */
export interface KeyStroke {
  key: string;
  ctrlKey?: boolean;
  metaKey?: boolean;
  altKey?: boolean;
  /** Uppercase tagName of the event target, when known. */
  targetTag?: string;
  targetEditable?: boolean;
}

/**
 * Map a keystroke to a labeling action, or null when it should fall
 * through to the browser. Typing contexts and modified keys are left
 * alone so shortcuts never swallow form input.
 */
export function shortcutAction(e: KeyStroke): ShortcutAction | null {
  if (e.targetTag === 'INPUT' || e.targetTag === 'SELECT' || e.targetTag === 'TEXTAREA') {
    return null;
  }
  if (e.targetEditable) return null;
  if (e.ctrlKey || e.metaKey || e.altKey) return null;
  switch (e.key) {
    case 'Enter':
    case 'f':
    case 'F':
      return 'finish';
    case 'Backspace':
    case 'u':
    case 'U':
      return 'undo';
    case 'd':
    case 'D':
      return 'toggle-difficult';
    case 's':
    case 'S':
      return 'save';
    case 'Escape':
      return 'discard';
    case '+':
    case '=':
      return 'zoom-in';
    case '-':
      return 'zoom-out';
    case '0':
      return 'zoom-fit';
    default:
      return null;
  }
}
