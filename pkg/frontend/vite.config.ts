import { defineConfig } from "vitest/config";

const SERVICE = "http://127.0.0.1:8000";

export default defineConfig({
  server: {
    proxy: {
      "/health": SERVICE,
      "/classes": SERVICE,
      "/predict": SERVICE,
      "/feedback": SERVICE,
    },
  },
  test: {
    environment: "jsdom",
    // the integration file boots the real model server, which is slow to import
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
