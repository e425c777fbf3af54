/** Browser wiring: hash routes, fetch, render, event delegation. */

import { ApiError, ReviewApi, type ReviewItem, type SessionView } from './api.js'
import {
  renderDashboard,
  renderError,
  renderHome,
  renderRaterPrompt,
  renderRatingFlow,
} from './render.js'
import { makeRaterStore, parseRoute, type Route } from './state.js'

const POLL_MS = 4000

export class App {
  private readonly api: ReviewApi
  private readonly raters = makeRaterStore()
  private pollTimer: number | undefined

  constructor(
    private readonly root: HTMLElement,
    baseUrl: string = '',
  ) {
    this.api = new ReviewApi(baseUrl)
  }

  start(): void {
    window.addEventListener('hashchange', () => void this.refresh())
    this.root.addEventListener('click', (event) => void this.onClick(event))
    this.root.addEventListener('submit', (event) => this.onSubmit(event))
    void this.refresh()
  }

  private route(): Route {
    return parseRoute(window.location.hash)
  }

  private async refresh(): Promise<void> {
    if (this.pollTimer !== undefined) {
      window.clearTimeout(this.pollTimer)
      this.pollTimer = undefined
    }
    const route = this.route()
    try {
      if (route.view === 'home') {
        this.root.innerHTML = renderHome()
      } else if (route.view === 'dashboard') {
        const view = await this.api.getSession(route.sessionId)
        this.root.innerHTML = renderDashboard(view)
        this.pollTimer = window.setTimeout(() => void this.refresh(), POLL_MS)
      } else {
        await this.refreshRating(route.sessionId)
      }
    } catch (err) {
      const message = err instanceof ApiError ? err.message : String(err)
      this.root.innerHTML = renderError(message)
    }
    this.hydrateImages()
  }

  private async refreshRating(sessionId: string): Promise<void> {
    const rater = this.raters.get()
    if (!rater) {
      this.root.innerHTML = renderRaterPrompt()
      return
    }
    const view = await this.api.getSession(sessionId, rater)
    const item = await this.nextPending(view, rater)
    this.root.innerHTML = renderRatingFlow(view, item, rater)
  }

  private async nextPending(view: SessionView, rater: string): Promise<ReviewItem | null> {
    if (view.stopped || view.current_round === null) return null
    const pending = await this.api.getPending(view.session_id, view.current_round, rater)
    return pending.length > 0 ? pending[0] : null
  }

  private hydrateImages(): void {
    for (const img of this.root.querySelectorAll<HTMLImageElement>(
      'img[data-role="candidate-image"]',
    )) {
      const ref = img.dataset.ref
      if (ref && !img.src) img.src = this.api.imageUrl(ref)
    }
  }

  private async onClick(event: Event): Promise<void> {
    const target = event.target as HTMLElement | null
    if (!target) return
    if (target.dataset.role === 'retry') {
      await this.refresh()
      return
    }
    if (target.dataset.role === 'score') {
      const route = this.route()
      const rater = this.raters.get()
      if (route.view !== 'rate' || !rater) return
      const item = target.dataset.item ?? ''
      const value = Number(target.dataset.score)
      try {
        await this.api.submitScore(route.sessionId, item, rater, value)
      } catch (err) {
        const message = err instanceof ApiError ? err.message : String(err)
        this.root.innerHTML = renderError(message)
        return
      }
      await this.refresh()
    }
  }

  private onSubmit(event: Event): void {
    const form = event.target as HTMLFormElement | null
    if (!form || form.dataset.role !== 'rater-form') return
    event.preventDefault()
    const input = form.elements.namedItem('rater') as HTMLInputElement | null
    const value = input?.value.trim()
    if (value) {
      this.raters.set(value)
      void this.refresh()
    }
  }
}

declare global {
  interface Window {
    poempixelApp?: App
  }
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  const app = new App(document.getElementById('app') as HTMLElement)
  window.poempixelApp = app
  app.start()
}
