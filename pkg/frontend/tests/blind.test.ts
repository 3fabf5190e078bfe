import { beforeEach, describe, expect, it } from "vitest";

import { createClient } from "../src/api.js";
import { createApp } from "../src/app.js";
import { FakeBackend, allKeys, flush, makeRecords } from "./helpers.js";

function mount(backend: FakeBackend) {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById("app") as HTMLElement;
  const app = createApp(root, createClient("", backend.fetch));
  return { root, app };
}

describe("votes are blind until resolved", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("the card DOM contains no original label before the vote resolves", async () => {
    const backend = new FakeBackend(makeRecords(2));
    const { root, app } = mount(backend);
    await app.start("alice");

    // The card is showing, but nothing label-like is in the DOM yet:
    // no reveal panel, no label fields, no wording about stored labels'
    // values. The class names appear only as the choice buttons.
    expect(root.querySelector('[data-testid="reveal"]')).toBeNull();
    expect(root.querySelector('[data-testid="original-label"]')).toBeNull();
    expect(root.querySelector('[data-testid="revised-label"]')).toBeNull();
    expect(root.textContent).not.toMatch(/original label/i);
    expect(root.textContent).not.toMatch(/revised label/i);
    for (const name of backend.classNames) {
      const holders = [...root.querySelectorAll<HTMLElement>("*")].filter(
        (node) => node.childElementCount === 0 && node.textContent === name,
      );
      expect(holders.length).toBeGreaterThan(0);
      for (const node of holders) {
        expect(node.tagName).toBe("BUTTON"); // choices, not revelations
      }
    }

    // The wire never carried a label either: every /api/next payload is
    // label-free and no /api/items call happened before the vote.
    const keys = allKeys(backend.servedNextPayloads);
    expect(keys.has("original_label")).toBe(false);
    expect(keys.has("revised_label")).toBe(false);
    expect(keys.has("label")).toBe(false);
    expect(backend.itemRequests).toBe(0);

    // After the vote resolves, the stored labels appear.
    root.querySelector<HTMLElement>('[data-testid="vote-0"]')!.click();
    await flush();
    expect(root.querySelector('[data-testid="reveal"]')).not.toBeNull();
    expect(
      root.querySelector<HTMLElement>('[data-testid="original-label"]')!.textContent,
    ).toBe("literal");
    expect(
      root.querySelector<HTMLElement>('[data-testid="revised-label"]')!.textContent,
    ).toBe("metaphorical");
  });

  it("the login view performs no API calls at all", () => {
    const backend = new FakeBackend(makeRecords(1));
    mount(backend);
    expect(backend.nextRequests).toBe(0);
    expect(backend.voteRequests).toBe(0);
    expect(backend.itemRequests).toBe(0);
  });

  it("stays blind across next/card cycles", async () => {
    const backend = new FakeBackend(makeRecords(3));
    const { root, app } = mount(backend);
    await app.start("alice");

    for (let round = 0; round < 2; round += 1) {
      expect(root.querySelector('[data-testid="reveal"]')).toBeNull();
      expect(root.textContent).not.toMatch(/original label/i);
      root.querySelector<HTMLElement>('[data-testid="vote-1"]')!.click();
      await flush();
      expect(root.querySelector('[data-testid="reveal"]')).not.toBeNull();
      root.querySelector<HTMLElement>('[data-testid="next"]')!.click();
      await flush();
    }

    const keys = allKeys(backend.servedNextPayloads);
    expect(keys.has("original_label")).toBe(false);
    expect(keys.has("revised_label")).toBe(false);
  });
});
