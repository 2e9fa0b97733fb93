import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    setupFiles: ["test/setup.ts"],
    testTimeout: 600_000,
    hookTimeout: 120_000,
    // tfjs keeps global state; a single fork avoids backend re-init races
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
  },
});
