/**
 * Pure view functions: typed service data in, HTML strings out.
 *
 * Two rules hold everywhere here. First, every number shown to a rater is
 * taken verbatim from a service response; this layer never adds, sums, or
 * averages scores. Second, blind-mode views must not hint at where a
 * candidate summary came from, so wording sticks to "summary", "reference",
 * and "poem".
 */

import type { ReviewItem, RoundView, SessionView } from './api.js'

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;')
}

function verse(text: string): string {
  return escapeHtml(text).replace(/\n/g, '<br>')
}

const SUMMARY_CONTROLS = [
  { value: 1, label: 'Accept (+1)' },
  { value: -1, label: 'Reject (-1)' },
]

const IMAGE_CONTROLS = [1, 2, 3, 4, 5].map((value) => ({
  value,
  label: String(value),
}))

export function renderRaterPrompt(): string {
  return `
    <section class="rater-prompt">
      <h2>Who is rating?</h2>
      <form data-role="rater-form">
        <input name="rater" placeholder="your rater id" required>
        <button type="submit">Start</button>
      </form>
    </section>`
}

export function renderRatingItem(item: ReviewItem, mode: 'summary' | 'image'): string {
  const controls = (mode === 'summary' ? SUMMARY_CONTROLS : IMAGE_CONTROLS)
    .map(
      (control) =>
        `<button class="score" data-role="score" data-item="${escapeHtml(item.item_id)}"` +
        ` data-score="${control.value}">${escapeHtml(control.label)}</button>`,
    )
    .join('')
  const poem = `
    <article class="panel poem">
      <h3>Poem</h3>
      <p>${verse(item.poem_text)}</p>
    </article>`
  let candidate: string
  if (mode === 'summary') {
    candidate = `
    <article class="panel candidate">
      <h3>Summary</h3>
      <p>${verse(item.payload.summary_text ?? '')}</p>
    </article>
    <article class="panel reference">
      <h3>Reference summary</h3>
      <p>${verse(item.payload.reference_text ?? '')}</p>
    </article>`
  } else {
    const ref = item.payload.image_ref ?? ''
    candidate = `
    <article class="panel picture">
      <h3>Image</h3>
      <img data-role="candidate-image" data-ref="${escapeHtml(ref)}" alt="round candidate">
    </article>`
  }
  const question =
    mode === 'summary'
      ? 'Is this summary as good as the reference?'
      : 'How well does the image fit the poem? (1 = poor, 5 = excellent)'
  return `
    <section class="rating-item" data-item-id="${escapeHtml(item.item_id)}">
      <div class="side-by-side">${poem}${candidate}</div>
      <footer class="controls">
        <p>${question}</p>
        ${controls}
      </footer>
    </section>`
}

export function renderRatingFlow(
  view: SessionView,
  item: ReviewItem | null,
  raterId: string,
): string {
  const pending = view.pending_count ?? 0
  const header = `
    <header class="flow-header">
      <h2>Session ${escapeHtml(view.session_id)} — round ${view.current_round ?? '—'}</h2>
      <p>Rater <strong>${escapeHtml(raterId)}</strong> · ${pending} item(s) left</p>
    </header>`
  if (view.stopped) {
    return header + renderStoppedBanner(view)
  }
  if (!item) {
    return `${header}
    <section class="all-done">
      <h3>Nothing left to rate</h3>
      <p>You have scored every item in this round. Waiting for the other raters.</p>
    </section>`
  }
  return header + renderRatingItem(item, view.mode)
}

export function renderStoppedBanner(view: SessionView): string {
  const template = view.selected_template_id ? ` (${escapeHtml(view.selected_template_id)})` : ''
  return `
    <section class="banner stopped" data-role="stopped-banner">
      stopped; selected round ${view.selected_round}${template}
    </section>`
}

function roundBadge(round: RoundView, raterTotal: number): string {
  if (round.complete) {
    return '<span class="badge complete">complete</span>'
  }
  if (round.status === 'closed') {
    return '<span class="badge closed">closed</span>'
  }
  return `<span class="badge amber">in progress ${round.rater_count}/${raterTotal}</span>`
}

function bar(round: RoundView, scale: number, selected: boolean): string {
  const value = round.aggregate
  const height = value === null ? 0 : Math.round((Math.abs(value) / scale) * 100)
  const label = value === null ? '—' : String(value)
  const classes = ['bar']
  if (selected) classes.push('selected')
  if (value !== null && value < 0) classes.push('negative')
  return `
    <div class="${classes.join(' ')}" data-round="${round.round}">
      <div class="bar-fill" style="height: ${height}%"></div>
      <div class="bar-value">${label}</div>
      <div class="bar-label">${escapeHtml(round.template_id)}</div>
    </div>`
}

export function renderDashboard(view: SessionView): string {
  if (view.rounds.length === 0) {
    return '<section class="dashboard empty"><p>no rounds yet</p></section>'
  }
  const magnitudes = view.rounds
    .map((r) => (r.aggregate === null ? 0 : Math.abs(r.aggregate)))
    .concat([1])
  const scale = Math.max(...magnitudes)
  const bars = view.rounds
    .map((round) => bar(round, scale, round.round === view.selected_round))
    .join('')
  const rows = view.rounds
    .map((round) => {
      const aggregate = round.aggregate === null ? '—' : String(round.aggregate)
      const extras = Object.entries(round.automated_metrics ?? {})
        .map(([key, value]) => `${escapeHtml(key)}=${String(value)}`)
        .join(' ')
      return `
      <tr data-round-row="${round.round}">
        <td>${round.round}</td>
        <td>${escapeHtml(round.template_id)}</td>
        <td>${round.status}</td>
        <td class="aggregate">${aggregate}</td>
        <td>${roundBadge(round, view.raters.length)}</td>
        <td>${extras}</td>
      </tr>`
    })
    .join('')
  const current = view.rounds.find((r) => r.round === view.current_round)
  const templateBlock = current?.template_text
    ? `<section class="template"><h3>Current template ${escapeHtml(current.template_id)}</h3>
       <pre>${escapeHtml(current.template_text)}</pre></section>`
    : ''
  const banner = view.stopped ? renderStoppedBanner(view) : ''
  return `
    <section class="dashboard">
      <h2>Session ${escapeHtml(view.session_id)} (${view.mode}, ${view.aggregation})</h2>
      ${banner}
      <div class="chart">${bars}</div>
      <table class="rounds">
        <thead><tr><th>round</th><th>template</th><th>status</th>
        <th>aggregate</th><th>progress</th><th>automated</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>
      ${templateBlock}
    </section>`
}

export function renderError(message: string, retryable = true): string {
  const retry = retryable
    ? '<button data-role="retry">Retry</button>'
    : ''
  return `
    <section class="banner error" data-role="error-banner">
      <p>${escapeHtml(message)}</p>
      ${retry}
    </section>`
}

export function renderHome(): string {
  return `
    <section class="home">
      <h2>Review console</h2>
      <p>Open <code>#/rate/&lt;session&gt;</code> to score the open round or
      <code>#/dashboard/&lt;session&gt;</code> to watch round progress.</p>
    </section>`
}
