// Mirrors the engine's lexical preprocessing: lowercase, then maximal
// runs of Unicode letters and digits (underscore splits).
const TOKEN_RE = /[\p{L}\p{N}]+/gu;

export function tokenize(text: string): string[] {
  return text.toLowerCase().match(TOKEN_RE) ?? [];
}
