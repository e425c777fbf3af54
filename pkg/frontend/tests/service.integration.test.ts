/**
 * End-to-end: the UI's own API client and views against the real Python
 * review service, driven the same way four human raters would. Skipped
 * when the backend package is not importable.
 */

import { execFileSync, spawn, type ChildProcess } from 'node:child_process'
import { mkdtempSync, writeFileSync } from 'node:fs'
import { tmpdir } from 'node:os'
import { join } from 'node:path'

import { afterAll, beforeAll, describe, expect, it } from 'vitest'

import { ReviewApi } from '../src/api.js'
import { renderDashboard, renderStoppedBanner } from '../src/render.js'

const PYTHON = process.env.POEMPIXEL_PYTHON ?? 'python3'

function backendAvailable(): boolean {
  try {
    execFileSync(PYTHON, ['-c', 'import poempixel'], { stdio: 'ignore' })
    return true
  } catch {
    return false
  }
}

function cli(args: string[]): string {
  return execFileSync(PYTHON, ['-m', 'poempixel.cli', ...args], { encoding: 'utf-8' })
}

describe.skipIf(!backendAvailable())('review flow against the real service', () => {
  let store: string
  let server: ChildProcess
  let api: ReviewApi
  const session = ['--store', '', '--session', 't9'] // store filled in beforeAll

  beforeAll(async () => {
    store = mkdtempSync(join(tmpdir(), 'poempixel-ui-'))
    session[1] = store
    const itemsFile = join(store, 'items.jsonl')
    writeFileSync(
      itemsFile,
      JSON.stringify({
        item_id: 'item-1',
        poem_text: 'a poem',
        payload: { image_ref: 'np01.png', poem_text: 'a poem' },
      }) + '\n',
    )
    cli([
      'tune', 'start', ...session, '--mode', 'image', '--template-id', 'I1',
      '--items-file', itemsFile, '--raters', 'r1,r2,r3,r4',
    ])
    server = spawn(PYTHON, ['-u', '-m', 'poempixel.cli', 'serve', '--store', store, '--port', '0'])
    const url = await new Promise<string>((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error('service did not start')), 15000)
      server.stdout!.on('data', (chunk: Buffer) => {
        const match = /listening on (http:\/\/[^\s]+)/.exec(chunk.toString())
        if (match) {
          clearTimeout(timer)
          resolve(match[1])
        }
      })
      server.on('error', reject)
    })
    api = new ReviewApi(url)
    await api.health()
  }, 30000)

  afterAll(() => {
    server?.kill()
  })

  it('four raters scoring [2,2,1,2] render aggregate 1.75 in the dashboard', async () => {
    const votes: Array<[string, number]> = [['r1', 2], ['r2', 2], ['r3', 1], ['r4', 2]]
    for (const [rater, value] of votes) {
      await api.submitScore('t9', 'item-1', rater, value)
    }
    const aggregate = await api.getAggregate('t9', 1)
    expect(aggregate.aggregate).toBe(1.75)
    expect(aggregate.complete).toBe(true)

    cli(['tune', 'close-round', ...session])
    const view = await api.getSession('t9')
    expect(view.rounds[0].aggregate).toBe(1.75)
    const html = renderDashboard(view)
    expect(html).toContain('<td class="aggregate">1.75</td>')
    expect(html).toContain('<div class="bar-value">1.75</div>')
    expect(view.stopped).toBe(false)
  })

  it('a decreased round renders the stopped banner consistent with tune status', async () => {
    const itemsFile = join(store, 'items2.jsonl')
    writeFileSync(
      itemsFile,
      JSON.stringify({
        item_id: 'item-2',
        poem_text: 'a poem',
        payload: { image_ref: 'np01.png', poem_text: 'a poem' },
      }) + '\n',
    )
    cli(['tune', 'advance', ...session, '--template-id', 'I2', '--items-file', itemsFile])
    for (const rater of ['r1', 'r2', 'r3', 'r4']) {
      await api.submitScore('t9', 'item-2', rater, 1) // mean 1 < 1.75: decrease
    }
    cli(['tune', 'close-round', ...session])

    const view = await api.getSession('t9')
    expect(view.stopped).toBe(true)
    expect(view.selected_round).toBe(1)
    expect(view.selected_template_id).toBe('I1')

    const banner = renderStoppedBanner(view)
    expect(banner).toContain('stopped; selected round 1 (I1)')
    expect(renderDashboard(view)).toContain('stopped; selected round 1 (I1)')

    const status = cli(['tune', 'status', ...session])
    expect(status).toContain('stopped after round 2, selected I1')
    // banner and CLI agree on the selected template
    const fromStatus = /selected (\S+)/.exec(status)![1]
    expect(banner).toContain(`(${fromStatus})`)
  })
})
