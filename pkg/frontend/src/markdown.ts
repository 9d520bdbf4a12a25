/** Just-enough markdown rendering for the guidelines panel.
 *
 * Supports `#`/`##` headings with optional `{#anchor}` ids, `-` list items,
 * bold/inline code spans, and plain paragraphs. Everything goes through
 * textContent, never innerHTML, so served text cannot inject markup.
 */

const HEADING = /^(#{1,3})\s+(.*?)(?:\s+\{#([\w-]+)\})?\s*$/;

function inline(target: HTMLElement, text: string): void {
  // **bold** and `code`; all other characters land verbatim.
  const pattern = /(\*\*.+?\*\*|`.+?`)/g;
  let last = 0;
  for (const match of text.matchAll(pattern)) {
    const index = match.index ?? 0;
    if (index > last) target.append(text.slice(last, index));
    const token = match[0];
    if (token.startsWith("**")) {
      const strong = document.createElement("strong");
      strong.textContent = token.slice(2, -2);
      target.append(strong);
    } else {
      const code = document.createElement("code");
      code.textContent = token.slice(1, -1);
      target.append(code);
    }
    last = index + token.length;
  }
  if (last < text.length) target.append(text.slice(last));
}

export interface RenderedSection {
  id: string | null;
  title: string;
}

/** Render markdown into `root`; returns the headings found (for nav links). */
export function renderMarkdown(root: HTMLElement, markdown: string): RenderedSection[] {
  root.replaceChildren();
  const sections: RenderedSection[] = [];
  let list: HTMLUListElement | null = null;
  let paragraph: string[] = [];

  const flushParagraph = () => {
    if (paragraph.length === 0) return;
    const p = document.createElement("p");
    inline(p, paragraph.join(" "));
    root.append(p);
    paragraph = [];
  };

  for (const rawLine of markdown.split("\n")) {
    const line = rawLine.trimEnd();
    const heading = line.match(HEADING);
    if (heading) {
      flushParagraph();
      list = null;
      const level = heading[1].length;
      const element = document.createElement(`h${Math.min(level + 1, 6)}`);
      inline(element, heading[2]);
      if (heading[3]) element.id = heading[3];
      root.append(element);
      sections.push({ id: heading[3] ?? null, title: heading[2] });
      continue;
    }
    const item = line.match(/^-\s+(.*)$/);
    if (item) {
      flushParagraph();
      if (!list) {
        list = document.createElement("ul");
        root.append(list);
      }
      const li = document.createElement("li");
      inline(li, item[1]);
      list.append(li);
      continue;
    }
    if (line.trim() === "") {
      flushParagraph();
      list = null;
      continue;
    }
    if (list) {
      // continuation of the previous list item
      const lastItem = list.lastElementChild;
      if (lastItem) {
        lastItem.append(" ");
        inline(lastItem as HTMLElement, line.trim());
        continue;
      }
    }
    paragraph.push(line.trim());
  }
  flushParagraph();
  return sections;
}
