import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    // worker_threads are unreliable in constrained sandboxes; child
    // processes are not
    pool: "forks",
    testTimeout: 15000,
    hookTimeout: 15000,
  },
});
