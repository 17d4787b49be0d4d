/**
 * Token rules shared with the QA engine: split on Unicode whitespace (the
 * engine's host-language definition, reproduced below), then peel leading and
 * trailing ASCII punctuation one character at a time, never shrinking a chunk
 * below one character. Any change here must keep fixtures/tokenizer_cases.json
 * green on both sides of the boundary.
 */

const ASCII_PUNCT = new Set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~".split(""));

// Whitespace set matching Python's str.split(): ASCII control whitespace,
// 0x1c-0x1f separators, NEL, NBSP, and the Unicode space separators.
const WHITESPACE = new Set(
  [
    0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x1c, 0x1d, 0x1e, 0x1f, 0x20, 0x85, 0xa0,
    0x1680, 0x2000, 0x2001, 0x2002, 0x2003, 0x2004, 0x2005, 0x2006, 0x2007,
    0x2008, 0x2009, 0x200a, 0x2028, 0x2029, 0x202f, 0x205f, 0x3000,
  ].map((cp) => String.fromCodePoint(cp)),
);

function splitWhitespace(text: string): string[] {
  const chunks: string[] = [];
  let current = "";
  for (const ch of text) {
    if (WHITESPACE.has(ch)) {
      if (current.length > 0) {
        chunks.push(current);
        current = "";
      }
    } else {
      current += ch;
    }
  }
  if (current.length > 0) chunks.push(current);
  return chunks;
}

export function tokenize(text: string): string[] {
  const tokens: string[] = [];
  for (let chunk of splitWhitespace(text)) {
    const head: string[] = [];
    const tail: string[] = [];
    // operate on code points so surrogate pairs survive
    let chars = Array.from(chunk);
    while (chars.length > 1 && ASCII_PUNCT.has(chars[0])) {
      head.push(chars[0]);
      chars = chars.slice(1);
    }
    while (chars.length > 1 && ASCII_PUNCT.has(chars[chars.length - 1])) {
      tail.push(chars[chars.length - 1]);
      chars = chars.slice(0, -1);
    }
    tokens.push(...head);
    tokens.push(chars.join(""));
    tokens.push(...tail.reverse());
  }
  return tokens;
}
