/**
 * Minimal SSE reader over fetch.
 *
 * EventSource is not available everywhere the console runs (the test
 * harness drives it under node), and the service only ever uses the
 * default event type with one JSON document per message, so a small
 * hand-rolled parser over the response body stream is all that is needed.
 */

/**
 * Split an SSE byte stream into message payload strings.
 *
 * Handles chunk boundaries falling anywhere, CRLF line endings, comment
 * lines (": keepalive") and multi-line data fields per the SSE framing
 * rules. Yields the joined data payload of each dispatched message.
 */
export async function* sseMessages(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<string> {
  const reader = body.getReader();
  const decoder = new TextDecoder();
  let buf = "";
  let dataLines: string[] = [];
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buf += decoder.decode(value, { stream: true });
      let nl: number;
      while ((nl = buf.indexOf("\n")) >= 0) {
        let line = buf.slice(0, nl);
        buf = buf.slice(nl + 1);
        if (line.endsWith("\r")) line = line.slice(0, -1);
        if (line === "") {
          // blank line dispatches the pending message
          if (dataLines.length > 0) {
            yield dataLines.join("\n");
            dataLines = [];
          }
          continue;
        }
        if (line.startsWith(":")) continue;
        if (line.startsWith("data:")) {
          dataLines.push(line.slice(5).replace(/^ /, ""));
        }
        // other field names (event:, id:, retry:) are not used by the service
      }
    }
  } finally {
    reader.releaseLock();
  }
}

/** Parse each SSE message as JSON, skipping anything malformed. */
export async function* sseJson<T>(
  body: ReadableStream<Uint8Array>,
): AsyncGenerator<T> {
  for await (const payload of sseMessages(body)) {
    try {
      yield JSON.parse(payload) as T;
    } catch {
      // a torn or non-JSON payload is dropped, the stream keeps going
    }
  }
}
