import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    testTimeout: 30_000,
    hookTimeout: 40_000,
    // the integration suite spawns one shared service process per file
    fileParallelism: false,
  },
});
