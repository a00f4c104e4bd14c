/** Minimal DOM helpers; no framework, the server owns all real state. */

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | boolean | null> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    if (value === null || value === false) continue;
    if (value === true) {
      node.setAttribute(key, "");
    } else if (key === "class") {
      node.className = value;
    } else {
      node.setAttribute(key, value);
    }
  }
  node.append(...children);
  return node;
}

export function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function button(
  label: string,
  opts: { enabled: boolean; reason?: string | null; onClick: () => void },
): HTMLButtonElement {
  const attrs: Record<string, string | boolean> = {
    class: opts.enabled ? "action" : "action disabled",
  };
  if (!opts.enabled) {
    attrs["disabled"] = true;
    if (opts.reason) attrs["title"] = opts.reason;
  }
  const node = el("button", attrs, label);
  if (opts.enabled) node.addEventListener("click", opts.onClick);
  return node;
}
