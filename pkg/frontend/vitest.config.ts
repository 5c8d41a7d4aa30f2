import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The live walkthrough drives about fifty HTTP round trips per test.
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
