/** Route parsing and rater-id persistence (session storage). */

export type Route =
  | { view: 'rate'; sessionId: string }
  | { view: 'dashboard'; sessionId: string }
  | { view: 'home' }

export function parseRoute(hash: string): Route {
  const cleaned = hash.replace(/^#\/?/, '')
  const [view, sessionId] = cleaned.split('/')
  if (view === 'rate' && sessionId) return { view: 'rate', sessionId }
  if (view === 'dashboard' && sessionId) return { view: 'dashboard', sessionId }
  return { view: 'home' }
}

export function routeHash(route: Route): string {
  if (route.view === 'home') return '#/'
  return `#/${route.view}/${route.sessionId}`
}

const RATER_KEY = 'poempixel.rater_id'

export interface RaterStore {
  get(): string | null
  set(id: string): void
}

/** Browser-backed store; falls back to memory outside a browser. */
export function makeRaterStore(storage?: Storage): RaterStore {
  const backing =
    storage ?? (typeof sessionStorage !== 'undefined' ? sessionStorage : undefined)
  let memory: string | null = null
  return {
    get: () => (backing ? backing.getItem(RATER_KEY) : memory),
    set: (id: string) => {
      if (backing) backing.setItem(RATER_KEY, id)
      else memory = id
    },
  }
}
