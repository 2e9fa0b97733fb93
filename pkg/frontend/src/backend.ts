import * as tf from "@tensorflow/tfjs";
import "@tensorflow/tfjs-backend-wasm";

let ready: Promise<string> | null = null;

/**
 * Select the tensor backend. Training requires "cpu" (the wasm backend
 * lacks convolution gradient kernels); inference-only workloads may pass
 * "wasm" for speed.
 */
export function initBackend(preferred: "cpu" | "wasm" = "cpu"): Promise<string> {
  if (!ready) {
    ready = tf
      .setBackend(preferred)
      .then((ok) => (ok ? undefined : tf.setBackend("cpu").then(() => undefined)))
      .then(() => tf.ready())
      .then(() => tf.getBackend());
  }
  return ready;
}
