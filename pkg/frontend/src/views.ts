// View components render to HTML strings; DOM wiring lives in app.ts.
// Keeping them pure makes every rendering rule unit-testable without a DOM.

import type { Assessment, CaseSummary, Message, RecallItem } from "./types.js";
import type { SessionStore } from "./store.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// ---------------------------------------------------------------------------
// session picker
// ---------------------------------------------------------------------------

export function sessionPicker(cases: CaseSummary[]): string {
  if (cases.length === 0) {
    return `<div class="picker empty">No cases available.</div>`;
  }
  const rows = cases
    .map(
      (c) => `<li class="case" data-patient-id="${escapeHtml(c.patient_id)}">
  <span class="dept">${escapeHtml(c.department)}</span>
  <span class="teaser">${escapeHtml(teaser(c.chief_complaint))}</span>
  <button data-action="open" data-patient-id="${escapeHtml(c.patient_id)}">Start session</button>
</li>`,
    )
    .join("\n");
  return `<ul class="picker">\n${rows}\n</ul>`;
}

export function teaser(complaint: string, max = 60): string {
  return complaint.length <= max ? complaint : complaint.slice(0, max - 1) + "…";
}

// ---------------------------------------------------------------------------
// chat view
// ---------------------------------------------------------------------------

const BADGES: Record<string, string> = {
  doctor: "to doctor",
  examiner: "to examiner",
  broadcast: "",
};

export function messageBubble(message: Message): string {
  const badge = BADGES[message.addressee] ?? message.addressee;
  const badgeHtml = badge
    ? ` <span class="badge addressee">${escapeHtml(badge)}</span>`
    : "";
  const terminal = message.terminal ? ` <span class="badge end">closed</span>` : "";
  return `<div class="msg ${escapeHtml(message.speaker)}" data-turn="${message.turn}">
  <span class="badge speaker">${escapeHtml(message.speaker)}</span>${badgeHtml}
  <p>${escapeHtml(message.content)}</p>${terminal}
</div>`;
}

export function chatView(store: SessionStore): string {
  const bubbles = store.messages.map(messageBubble).join("\n");
  const disabled = store.inputDisabled ? " disabled" : "";
  return `<div class="chat" data-session="${escapeHtml(store.sessionId)}">
<div class="transcript">
${bubbles}
</div>
<form class="composer">
  <input name="message" placeholder="Ask the patient…"${disabled}>
  <button type="submit"${disabled}>Send</button>
</form>
</div>`;
}

// ---------------------------------------------------------------------------
// recall panel
// ---------------------------------------------------------------------------

const CARD_FIELDS: Array<[keyof RecallItem["card"], string]> = [
  ["definition", "Definition"],
  ["pathogenesis", "Pathogenesis"],
  ["main_symptoms", "Main symptoms"],
  ["auxiliary_exam_methods", "Auxiliary examination methods"],
  ["treatment_plans", "Treatment plans"],
];

export function recallPanel(items: RecallItem[]): string {
  if (items.length === 0) {
    return `<div class="recall empty">Nothing recalled yet — learn some cases first.</div>`;
  }
  const cards = items
    .map((item, i) => {
      const fields = CARD_FIELDS.map(
        ([key, label]) =>
          `<dt>${label}</dt><dd>${escapeHtml(item.card[key].join("; "))}</dd>`,
      ).join("\n");
      return `<section class="card" data-index="${i}" data-disease="${escapeHtml(item.disease)}">
<h3>${escapeHtml(item.disease)}</h3>
<dl>
${fields}
</dl>
<details><summary>Suggestions from case ${escapeHtml(item.patient_id)}</summary>
<pre>${escapeHtml(item.suggestions)}</pre></details>
<button data-action="draft" data-index="${i}">Draft question</button>
</section>`;
    })
    .join("\n");
  return `<div class="recall">\n${cards}\n</div>`;
}

/** The question a card click drops into the composer input. */
export function draftQuestion(item: RecallItem): string {
  const symptoms = item.card.main_symptoms.join(", ");
  return symptoms
    ? `Could it be ${item.disease}? Have you noticed ${symptoms}?`
    : `Could it be ${item.disease}?`;
}

// ---------------------------------------------------------------------------
// assessment view
// ---------------------------------------------------------------------------

const SECTION_LABELS: Record<string, string> = {
  symptoms: "Symptoms",
  examinations: "Medical examinations",
  diagnostic_results: "Diagnostic results",
  rationales: "Diagnostic rationales",
  treatment_plan: "Treatment plan",
};

const SCORE_LABELS: Record<string, string> = {
  symptom: "Symptoms",
  examination: "Medical examinations",
  results: "Diagnostic results",
  rationales: "Diagnostic rationales",
  treatment: "Treatment plan",
};

export function clampScore(value: number): number {
  return Math.min(4, Math.max(1, value));
}

export function assessmentView(assessment: Assessment): string {
  const sections = Object.entries(SECTION_LABELS)
    .map(
      ([key, label]) => `<section class="suggestion" data-section="${key}">
<h4>${label}</h4>
<p>${escapeHtml(assessment.suggestions[key] ?? "")}</p>
</section>`,
    )
    .join("\n");
  const bars = Object.entries(SCORE_LABELS)
    .map(([key, label]) => {
      const score = clampScore(assessment.scores[key] ?? 1);
      const width = ((score - 1) / 3) * 100;
      return `<div class="bar" data-score="${score}">
<span>${label}</span><div class="fill" style="width:${width}%"></div><b>${score}/4</b>
</div>`;
    })
    .join("\n");
  return `<div class="assessment">
<h2>Expert assessment <small>avg ${assessment.avg.toFixed(2)}</small></h2>
${sections}
<div class="scores">
${bars}
</div>
</div>`;
}
