export * from "./tensorFile.js";
export * from "./unet.js";
export * from "./losses.js";
export * from "./dataset.js";
export * from "./train.js";
export * from "./rollout.js";
export * from "./evaluate.js";
export { initBackend } from "./backend.js";
