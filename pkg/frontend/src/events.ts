/** NDJSON event stream reader with automatic reconnect.
 *
 * The server's stream is plain newline-delimited JSON over a long-lived
 * response.  On any error the connection backs off and reopens; the caller's
 * `onReconnect` hook refetches state, because the server is the single
 * source of truth and missed events must never be reconstructed client-side.
 */

import type { ServerEvent } from "./api.js";

export interface StreamHandle {
  stop(): void;
}

export function connectEvents(
  url: string,
  onEvent: (ev: ServerEvent) => void,
  onReconnect: () => void,
  fetchImpl: typeof fetch = fetch,
): StreamHandle {
  let stopped = false;
  let backoff = 500;

  const run = async (): Promise<void> => {
    while (!stopped) {
      try {
        const resp = await fetchImpl(url);
        if (!resp.ok || !resp.body) throw new Error(`stream ${resp.status}`);
        backoff = 500;
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        let buffer = "";
        for (;;) {
          const { done, value } = await reader.read();
          if (stopped) {
            void reader.cancel();
            return;
          }
          if (done) break;
          buffer += decoder.decode(value, { stream: true });
          let newline = buffer.indexOf("\n");
          while (newline >= 0) {
            const line = buffer.slice(0, newline).trim();
            buffer = buffer.slice(newline + 1);
            if (line) {
              try {
                onEvent(JSON.parse(line) as ServerEvent);
              } catch {
                /* tolerate malformed lines; the next state fetch resyncs */
              }
            }
            newline = buffer.indexOf("\n");
          }
        }
      } catch {
        /* fall through to backoff */
      }
      if (stopped) return;
      await new Promise((resolve) => setTimeout(resolve, backoff));
      backoff = Math.min(backoff * 2, 10_000);
      if (!stopped) onReconnect();
    }
  };

  void run();
  return {
    stop() {
      stopped = true;
    },
  };
}
