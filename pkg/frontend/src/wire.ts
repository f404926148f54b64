/** Length-delimited sync wire format.
 *
 * Frame per record: ASCII decimal byte length of the JSON body, newline,
 * body, newline. Identical to the server and CLI simulator framing, so the
 * browser queue and the desktop tools exercise the same protocol.
 */

import type { WireRecord } from "./types.js";

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeRecords(records: WireRecord[]): string {
  let out = "";
  for (const record of records) {
    const body = JSON.stringify(record);
    out += `${encoder.encode(body).length}\n${body}\n`;
  }
  return out;
}

export function decodeRecords(text: string): WireRecord[] {
  const bytes = encoder.encode(text);
  const records: WireRecord[] = [];
  let pos = 0;
  while (pos < bytes.length) {
    const nl = bytes.indexOf(0x0a, pos);
    if (nl < 0) throw new Error("truncated length prefix");
    const length = Number(decoder.decode(bytes.slice(pos, nl)));
    if (!Number.isInteger(length) || length < 0) throw new Error("bad length prefix");
    const start = nl + 1;
    const end = start + length;
    if (end >= bytes.length + 1 || bytes[end] !== 0x0a) {
      throw new Error("record framing broken");
    }
    records.push(JSON.parse(decoder.decode(bytes.slice(start, end))) as WireRecord);
    pos = end + 1;
  }
  return records;
}
