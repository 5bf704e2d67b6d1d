/** Debounced, latest-wins async dispatcher.
 *
 * Rapid calls collapse to one request after the quiet period; while a
 * request is in flight new calls queue a single follow-up, and responses to
 * superseded requests are dropped.  At most one request is in flight at any
 * time.
 */

export class LatestWins<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private queued = false;
  private seq = 0;

  constructor(
    private readonly delayMs: number,
    private readonly run: () => Promise<T>,
    private readonly onResult: (result: T) => void,
    private readonly onError: (err: unknown) => void = () => undefined,
  ) {}

  /** Schedule a run after the quiet period, superseding any pending one. */
  trigger(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
    }
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.delayMs);
  }

  /** Run immediately (still respecting the single-in-flight rule). */
  flush(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    void this.fire();
  }

  private async fire(): Promise<void> {
    if (this.inFlight) {
      this.queued = true;
      return;
    }
    this.inFlight = true;
    const mySeq = ++this.seq;
    try {
      const result = await this.run();
      if (mySeq === this.seq) {
        this.onResult(result);
      }
    } catch (err) {
      if (mySeq === this.seq) {
        this.onError(err);
      }
    } finally {
      this.inFlight = false;
      if (this.queued) {
        this.queued = false;
        void this.fire();
      }
    }
  }
}
