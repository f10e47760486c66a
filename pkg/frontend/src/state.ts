/**
 * UI session state: an optimistic mirror of the server's estimate.
 *
 * Edits apply to the mirror immediately and are sent per-field with
 * in-flight deduplication: while a PATCH for a field is on the wire, newer
 * values for that field coalesce into one trailing PATCH. Every accepted
 * PATCH schedules a preview; previews also coalesce, and a preview that
 * comes back older than the newest accepted revision triggers one more
 * render, so the displayed preview always converges to the last edit.
 */

import type { EditorApi } from "./api.js";
import type {
  EstimatePayload,
  LightField,
  LightValue,
  RenderSettings,
} from "./types.js";
import { DEFAULT_RENDER } from "./types.js";

export type ConnectionStatus = "connecting" | "ok" | "offline";

export interface StateEvents {
  onEstimate?(estimate: EstimatePayload): void;
  onPreview?(blob: Blob, revision: number): void;
  onConnection?(status: ConnectionStatus): void;
  onEditRejected?(field: string, message: string): void;
}

export class EditorState {
  estimate: EstimatePayload | null = null;
  revision = -1;
  previewRevision = -1;
  connection: ConnectionStatus = "connecting";
  renderSettings: RenderSettings = { ...DEFAULT_RENDER };

  private pendingEdits = new Map<LightField, LightValue>();
  private inflightFields = new Set<LightField>();
  private previewInFlight = false;
  private previewQueued = false;

  constructor(
    private readonly api: EditorApi,
    private readonly events: StateEvents = {},
  ) {}

  async connect(): Promise<void> {
    this.setConnection("connecting");
    try {
      this.applyEstimate(await this.api.getEstimate());
      this.setConnection("ok");
      this.requestPreview();
    } catch {
      this.setConnection("offline");
    }
  }

  /** Record an edit locally and queue its PATCH (deduped per field). */
  edit(field: LightField, value: LightValue): void {
    if (this.estimate) {
      this.applyLocal(field, value);
      this.events.onEstimate?.(this.estimate);
    }
    this.pendingEdits.set(field, value);
    void this.pump(field);
  }

  /** True when edits or previews are still on the wire (used by tests). */
  get settled(): boolean {
    return (
      this.pendingEdits.size === 0 &&
      this.inflightFields.size === 0 &&
      !this.previewInFlight &&
      !this.previewQueued
    );
  }

  private async pump(field: LightField): Promise<void> {
    if (this.inflightFields.has(field)) return; // trailing value already queued
    const value = this.pendingEdits.get(field);
    if (value === undefined) return;
    this.pendingEdits.delete(field);
    this.inflightFields.add(field);
    try {
      const estimate = await this.api.patchLight(field, value);
      this.applyEstimate(estimate);
      this.setConnection("ok");
      this.requestPreview();
    } catch (err) {
      const e = err as { status?: number; message?: string };
      if (e.status === 422) {
        this.events.onEditRejected?.(field, e.message ?? "value out of range");
      } else {
        this.setConnection("offline");
      }
    } finally {
      this.inflightFields.delete(field);
    }
    if (this.pendingEdits.has(field)) void this.pump(field);
  }

  /** Ask for a preview of the current revision; coalesces concurrent calls. */
  requestPreview(): void {
    if (this.previewInFlight) {
      this.previewQueued = true;
      return;
    }
    this.previewInFlight = true;
    void this.api
      .renderPreview(this.renderSettings)
      .then((res) => {
        if (res.revision >= this.previewRevision) {
          this.previewRevision = res.revision;
          this.events.onPreview?.(res.blob, res.revision);
        }
        this.setConnection("ok");
      })
      .catch(() => this.setConnection("offline"))
      .finally(() => {
        this.previewInFlight = false;
        const stale = this.previewRevision < this.revision;
        if (this.previewQueued || stale) {
          this.previewQueued = false;
          this.requestPreview();
        }
      });
  }

  async updateLayout(floor: number[][], ceiling: number[][]): Promise<void> {
    try {
      this.applyEstimate(await this.api.putLayout(floor, ceiling));
      this.requestPreview();
    } catch (err) {
      const e = err as { status?: number; message?: string };
      if (e.status === 422) {
        this.events.onEditRejected?.("corners", e.message ?? "invalid corners");
      } else {
        this.setConnection("offline");
      }
    }
  }

  private applyEstimate(estimate: EstimatePayload): void {
    // server echo wins over the optimistic mirror, but never move backward
    if (estimate.revision < this.revision) return;
    this.estimate = estimate;
    this.revision = estimate.revision;
    this.events.onEstimate?.(estimate);
  }

  private applyLocal(field: LightField, value: LightValue): void {
    if (!this.estimate) return;
    const e = this.estimate;
    switch (field) {
      case "azimuth_deg":
        e.azimuth_deg = value as number;
        break;
      case "elevation_deg":
        e.elevation_deg = value as number;
        break;
      case "radius_m":
        e.light.radius_m = value as number;
        break;
      case "distance_m":
        e.light.distance_m = value as number;
        break;
      case "color_rgb":
        e.light.color_rgb = value as [number, number, number];
        break;
      case "ambient_rgb":
        e.light.ambient_rgb = value as [number, number, number];
        break;
    }
  }

  private setConnection(status: ConnectionStatus): void {
    if (this.connection !== status) {
      this.connection = status;
      this.events.onConnection?.(status);
    }
  }
}
