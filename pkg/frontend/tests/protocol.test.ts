import { describe, expect, it } from "vitest";

import { parseServerMessage } from "../src/protocol.js";

describe("parseServerMessage", () => {
  it("accepts stream messages", () => {
    const msg = parseServerMessage(JSON.stringify({
      type: "state", t_ns: 5,
      payload: { position_s: 0, lateral_offset: 0, speed: 1, brake_pressure_applied: 0,
                 throttle_applied: 0, stamp: 5 },
    }));
    expect(msg?.type).toBe("state");
  });

  it("accepts acks with and without reasons", () => {
    expect(parseServerMessage('{"type":"ack","cmd":"reset","ok":false,"reason":"moving","t_ns":1}'))
      .toMatchObject({ type: "ack", ok: false, reason: "moving" });
    expect(parseServerMessage('{"type":"ack","cmd":"flag","ok":true,"t_ns":2}'))
      .toMatchObject({ type: "ack", ok: true });
  });

  it("accepts error messages", () => {
    expect(parseServerMessage('{"type":"error","reason":"malformed command"}'))
      .toMatchObject({ type: "error" });
  });

  it("rejects garbage", () => {
    expect(parseServerMessage("{oops")).toBeNull();
    expect(parseServerMessage('"just a string"')).toBeNull();
    expect(parseServerMessage('{"type":"state"}')).toBeNull();
    expect(parseServerMessage('{"type":"mystery","t_ns":1,"payload":{}}')).toBeNull();
  });
});
