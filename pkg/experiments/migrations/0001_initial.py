# Generated by Django 5.2.7 on 2026-10-18 09:12

from django.db import migrations, models
import uuid


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('scenario', models.CharField(max_length=100)),
                ('source', models.CharField(choices=[('preset', 'Preset'), ('config', 'Config file')], default='preset', max_length=10)),
                ('seed', models.IntegerField(default=0)),
                ('omega_inj', models.FloatField(blank=True, help_text='Injection pulsation (rad/s)', null=True)),
                ('max_error_deg', models.FloatField(blank=True, null=True)),
                ('mean_error_deg', models.FloatField(blank=True, null=True)),
                ('max_error_deg_no_saturation', models.FloatField(blank=True, null=True)),
                ('mean_error_deg_no_saturation', models.FloatField(blank=True, null=True)),
                ('averaging', models.JSONField(blank=True, null=True)),
                ('observability', models.JSONField(blank=True, null=True)),
                ('runtime', models.FloatField(help_text='Wall-clock time (seconds)')),
                ('csv_path', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['scenario', 'created_at'], name='run_scenario_created_idx')],
            },
        ),
    ]
