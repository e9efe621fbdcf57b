// Word counting for the editor footers: whitespace-separated tokens.

export function countWords(text: string): number {
  const trimmed = text.trim();
  if (trimmed === "") return 0;
  return trimmed.split(/\s+/).length;
}

export function wordCountLabel(text: string): string {
  return `Words: ${countWords(text)}`;
}
